//! Exhaustive ground truth for tiny markets.
//!
//! Nothing here calls into [`crate::mechanisms`] or [`crate::envy`]: stable
//! matchings are found by trying every perfect matching, envy is counted
//! pair by pair, and serial dictatorship is re-implemented naively. The
//! expectations are exact rationals over every equally likely profile.

use num_rational::Ratio;
use num_traits::{CheckedAdd, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{MarketInstance, Matching};
use crate::theory::Mechanism;

pub type Rational = Ratio<i128>;

/// Largest `n` for which whole profile spaces are enumerated by default.
pub const DEFAULT_MAX_PROFILE_N: usize = 3;
/// Largest `n` for which all matchings of one market are enumerated.
pub const DEFAULT_MAX_MATCHING_N: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactExpectation {
    pub n: usize,
    pub mechanism: Mechanism,
    pub unenvied_mean: Rational,
    pub envy_nobody_mean: Rational,
    pub profile_count: u64,
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for x in 0..n {
            if !used[x] {
                used[x] = true;
                cur.push(x);
                rec(n, cur, used, out);
                cur.pop();
                used[x] = false;
            }
        }
    }
    rec(n, &mut cur, &mut used, &mut out);
    out
}

/// Exact `H_n` as a reduced fraction.
pub fn harmonic_exact(n: usize) -> Result<Rational> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    (1..=n).try_fold(Rational::zero(), |acc, k| {
        acc.checked_add(&Rational::new(1, k as i128)).ok_or(Error::Overflow)
    })
}

/// `sum_k 1/(n - k + 1)` over serial positions `k = 1..n`.
pub fn rsd_position_sum_exact(n: usize) -> Result<Rational> {
    (1..=n).try_fold(Rational::zero(), |acc, k| {
        acc.checked_add(&Rational::new(1, (n - k + 1) as i128)).ok_or(Error::Overflow)
    })
}

fn stable(market: &MarketInstance, assignment: &[usize]) -> bool {
    let n = market.n();
    let mut holder = vec![0; n];
    for (i, &s) in assignment.iter().enumerate() {
        holder[s] = i;
    }
    for i in 0..n {
        for s in 0..n {
            let student_wants = market.student_prefs.position(i, s) < market.student_prefs.position(i, assignment[i]);
            let school_wants =
                market.school_priorities.position(s, i) < market.school_priorities.position(s, holder[s]);
            if student_wants && school_wants {
                return false;
            }
        }
    }
    true
}

fn all_stable(market: &MarketInstance) -> Vec<Vec<usize>> {
    permutations(market.n())
        .into_iter()
        .filter(|a| stable(market, a))
        .collect()
}

/// Every stable perfect matching of `market`.
pub fn all_stable_matchings(market: &MarketInstance) -> Result<Vec<Matching>> {
    all_stable_matchings_with_limit(market, DEFAULT_MAX_MATCHING_N)
}

pub fn all_stable_matchings_with_limit(market: &MarketInstance, max_n: usize) -> Result<Vec<Matching>> {
    if market.n() > max_n {
        return Err(Error::SizeGuard { n: market.n(), max: max_n });
    }
    all_stable(market).into_iter().map(Matching::new).collect()
}

/// The stable matching every student weakly prefers to every other stable
/// matching.
pub fn student_optimal_stable(market: &MarketInstance) -> Matching {
    let candidates = all_stable(market);
    let p = &market.student_prefs;
    let best = candidates
        .iter()
        .find(|a| {
            candidates
                .iter()
                .all(|b| (0..market.n()).all(|i| p.position(i, a[i]) <= p.position(i, b[i])))
        })
        .expect("a student-optimal stable matching exists");
    Matching::new(best.clone()).expect("candidate is a permutation")
}

/// `(unenvied, envy_nobody)` by checking every ordered pair of students.
pub fn envy_counts(market: &MarketInstance, matching: &Matching) -> (usize, usize) {
    let n = market.n();
    let p = &market.student_prefs;
    let mut envied = vec![false; n];
    let mut envious = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && p.position(i, matching.school_of(j)) < p.position(i, matching.school_of(i)) {
                envious[i] = true;
                envied[j] = true;
            }
        }
    }
    (
        envied.iter().filter(|&&e| !e).count(),
        envious.iter().filter(|&&e| !e).count(),
    )
}

/// Visits every market of size `n`, in parallel, split by the first
/// student's ranking. `f` returns per-profile integer tallies that are
/// summed exactly.
pub fn fold_profiles<F>(n: usize, max_n: usize, f: F) -> Result<(u64, [u64; 2])>
where
    F: Fn(&MarketInstance) -> [u64; 2] + Sync,
{
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    if n > max_n {
        return Err(Error::SizeGuard { n, max: max_n });
    }
    let perms = permutations(n);
    let base = perms.len();
    let rest = base.pow(2 * n as u32 - 1);
    let partials: Vec<(u64, [u64; 2])> = (0..base)
        .into_par_iter()
        .map(|first| {
            let mut count = 0u64;
            let mut sums = [0u64; 2];
            let mut students = vec![Vec::new(); n];
            let mut schools = vec![Vec::new(); n];
            for idx in 0..rest {
                let mut digits = idx;
                students[0] = perms[first].clone();
                for row in students.iter_mut().skip(1).chain(schools.iter_mut()) {
                    *row = perms[digits % base].clone();
                    digits /= base;
                }
                let market = MarketInstance::new(&students, &schools).expect("enumerated rows are permutations");
                let t = f(&market);
                sums[0] += t[0];
                sums[1] += t[1];
                count += 1;
            }
            (count, sums)
        })
        .collect();
    partials.into_iter().try_fold((0u64, [0u64; 2]), |(c, s), (pc, ps)| {
        Some((c.checked_add(pc)?, [s[0].checked_add(ps[0])?, s[1].checked_add(ps[1])?]))
    })
    .ok_or(Error::Overflow)
}

fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(num as i128, den as i128)
}

/// Exact expected envy counts over all profiles when each market is
/// matched by `matcher`.
pub fn enumerate_expected_with<M>(n: usize, max_n: usize, matcher: M) -> Result<ExactExpectation>
where
    M: Fn(&MarketInstance) -> Matching + Sync,
{
    let (count, [unenvied, envy_nobody]) = fold_profiles(n, max_n, |m| {
        let (u, e) = envy_counts(m, &matcher(m));
        [u as u64, e as u64]
    })?;
    Ok(ExactExpectation {
        n,
        mechanism: Mechanism::Da,
        unenvied_mean: ratio(unenvied, count),
        envy_nobody_mean: ratio(envy_nobody, count),
        profile_count: count,
    })
}

/// Exact `E[unenvied]` (and `E[envy nobody]`) under DA, with DA replaced by
/// brute-force search for the student-optimal stable matching.
pub fn enumerate_expected_unenvied_da(n: usize) -> Result<ExactExpectation> {
    enumerate_expected_with(n, DEFAULT_MAX_PROFILE_N, student_optimal_stable)
}

pub fn enumerate_expected_unenvied_da_with_limit(n: usize, max_n: usize) -> Result<ExactExpectation> {
    enumerate_expected_with(n, max_n, student_optimal_stable)
}

fn naive_serial(market: &MarketInstance, order: &[usize]) -> Matching {
    let n = market.n();
    let mut free: Vec<usize> = (0..n).collect();
    let mut assignment = vec![0; n];
    for &i in order {
        let best = *free
            .iter()
            .min_by_key(|&&s| market.student_prefs.position(i, s))
            .expect("a school is free");
        free.retain(|&s| s != best);
        assignment[i] = best;
    }
    Matching::new(assignment).expect("serial picks form a bijection")
}

/// Exact expectations under RSD over every profile and every serial order.
pub fn enumerate_expected_rsd(n: usize) -> Result<ExactExpectation> {
    enumerate_expected_rsd_with_limit(n, DEFAULT_MAX_PROFILE_N)
}

pub fn enumerate_expected_rsd_with_limit(n: usize, max_n: usize) -> Result<ExactExpectation> {
    let orders = permutations(n.min(max_n));
    let (count, [unenvied, envy_nobody]) = fold_profiles(n, max_n, |m| {
        let mut t = [0u64; 2];
        for order in &orders {
            let (u, e) = envy_counts(m, &naive_serial(m, order));
            t[0] += u as u64;
            t[1] += e as u64;
        }
        t
    })?;
    let count = count * orders.len() as u64;
    Ok(ExactExpectation {
        n,
        mechanism: Mechanism::Rsd,
        unenvied_mean: ratio(unenvied, count),
        envy_nobody_mean: ratio(envy_nobody, count),
        profile_count: count,
    })
}
