//! Exhaustive self-check run by `envylab verify`.

use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::experiments::replication_seed;
use crate::mechanisms::{blocking_pairs, deferred_acceptance, sequential_da, sequential_da_on, QueueDiscipline};
use crate::model::{MarketInstance, Matching, Seed};
use crate::oracle::{
    self, enumerate_expected_rsd_with_limit, enumerate_expected_unenvied_da_with_limit, enumerate_expected_with,
    harmonic_exact, Rational,
};
use crate::theory::Mechanism;

/// Mechanism under test; swapped out in tests to check that the suite can
/// fail.
#[derive(Clone, Copy)]
pub struct VerifyHooks {
    pub da: fn(&MarketInstance) -> Matching,
}

impl Default for VerifyHooks {
    fn default() -> Self {
        VerifyHooks {
            da: deferred_acceptance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {}: {}", self.name, self.detail)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn fmt_ratio(r: &Rational) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Runs every check for `n = 1..=max_n`. `max_n` is enforced against
/// `limit` by the enumeration routines.
pub fn run_suite(max_n: usize, limit: usize, hooks: VerifyHooks) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        let h = harmonic_exact(n)?;
        let half = Rational::new(n as i128 + 1, 2);

        let brute = enumerate_expected_unenvied_da_with_limit(n, limit)?;
        out.push(check(
            format!("n={n} oracle E[unenvied | DA] = H_{n}"),
            brute.unenvied_mean == h,
            format!("{} vs {} over {} profiles", fmt_ratio(&brute.unenvied_mean), fmt_ratio(&h), brute.profile_count),
        ));

        let mech = enumerate_expected_with(n, limit, hooks.da)?;
        out.push(check(
            format!("n={n} mechanism E[unenvied | DA] = H_{n}"),
            mech.unenvied_mean == h,
            format!("{} vs {}", fmt_ratio(&mech.unenvied_mean), fmt_ratio(&h)),
        ));

        let rsd = enumerate_expected_rsd_with_limit(n, limit)?;
        out.push(check(
            format!("n={n} E[unenvied | RSD] = H_{n}"),
            rsd.unenvied_mean == h,
            format!("{} vs {}", fmt_ratio(&rsd.unenvied_mean), fmt_ratio(&h)),
        ));
        out.push(check(
            format!("n={n} E[envy nobody | RSD] = (n+1)/2"),
            rsd.envy_nobody_mean == half,
            format!("{} vs {}", fmt_ratio(&rsd.envy_nobody_mean), fmt_ratio(&half)),
        ));

        let da = hooks.da;
        let (profiles, [bad_match, unstable]) = oracle::fold_profiles(n, limit, |m| {
            let x = da(m);
            [
                u64::from(x != oracle::student_optimal_stable(m)),
                u64::from(!blocking_pairs(m, &x).is_empty()),
            ]
        })?;
        out.push(check(
            format!("n={n} DA stable and student-optimal"),
            bad_match == 0 && unstable == 0,
            format!("{profiles} profiles, {bad_match} differ from brute force, {unstable} unstable"),
        ));

        let (_, [seq_diff, _]) = oracle::fold_profiles(n, limit, |m| {
            let x = da(m);
            let differs = [QueueDiscipline::Fifo, QueueDiscipline::Lifo, QueueDiscipline::Random(7)]
                .into_iter()
                .any(|q| sequential_da_on(m, q, Seed::new(0, 0)).0 != x);
            [u64::from(differs), 0]
        })?;
        out.push(check(
            format!("n={n} sequential DA = standard DA"),
            seq_diff == 0,
            format!("{seq_diff} of {profiles} profiles differ"),
        ));
    }

    // Random markets too large to enumerate: every queue rule and the
    // replay through standard DA agree.
    let n = 200;
    let failures: usize = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(0x5eed, n, Mechanism::Da, r);
            let base = sequential_da(n, seed, QueueDiscipline::Lifo).expect("n >= 1");
            let market = base.completed_market();
            let mut bad = usize::from((hooks.da)(&market) != base.matching);
            bad += usize::from(!blocking_pairs(&market, &base.matching).is_empty());
            for q in [QueueDiscipline::Fifo, QueueDiscipline::Random(r)] {
                bad += usize::from(sequential_da(n, seed, q).expect("n >= 1").matching != base.matching);
            }
            bad
        })
        .sum();
    out.push(check(
        "n=200 queue invariance and replay (20 markets)",
        failures == 0,
        format!("{failures} mismatches"),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reversed_da(m: &MarketInstance) -> Matching {
        let x = deferred_acceptance(m);
        let mut a = x.assignment().to_vec();
        a.reverse();
        Matching::new(a).unwrap()
    }

    #[test]
    fn suite_passes_to_n2() {
        let checks = run_suite(2, 3, VerifyHooks::default()).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
    }

    #[test]
    fn suite_catches_broken_da() {
        let checks = run_suite(2, 3, VerifyHooks { da: reversed_da }).unwrap();
        assert!(checks.iter().any(|c| !c.passed));
    }
}
