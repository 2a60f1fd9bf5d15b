//! Closed-form expectations for random markets of size `n`.
//!
//! | quantity          | DA               | RSD / TTC   |
//! |-------------------|------------------|-------------|
//! | unenvied students | `H_n`            | `H_n`       |
//! | envy nobody       | `~ n / H_n`      | `(n + 1)/2` |
//!
//! The DA envy-nobody value comes from approximating a student's rank by a
//! geometric law with success probability `1 / H_n`; it has no finite-`n`
//! error bound. Everything else in the table is exact.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Da,
    Rsd,
    Ttc,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Da, Mechanism::Rsd, Mechanism::Ttc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Da => "da",
            Mechanism::Rsd => "rsd",
            Mechanism::Ttc => "ttc",
        }
    }

    pub(crate) fn id(self) -> u64 {
        match self {
            Mechanism::Da => 1,
            Mechanism::Rsd => 2,
            Mechanism::Ttc => 3,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "da" => Ok(Mechanism::Da),
            "rsd" => Ok(Mechanism::Rsd),
            "ttc" => Ok(Mechanism::Ttc),
            _ => Err(format!("unknown mechanism {s:?} (expected da, rsd or ttc)")),
        }
    }
}

/// `H_n = 1 + 1/2 + ... + 1/n`, summed smallest term first.
pub fn harmonic(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    Ok((1..=n).rev().map(|k| 1.0 / k as f64).sum())
}

/// `ln n + gamma`.
pub fn harmonic_asymptotic(n: usize) -> f64 {
    (n as f64).ln() + EULER_GAMMA
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub n: usize,
    pub mechanism: Mechanism,
    pub unenvied_mean: f64,
    pub unenvied_exact: bool,
    pub envy_nobody_mean: f64,
    pub envy_nobody_exact: bool,
    pub mean_rank: f64,
    pub mean_rank_exact: bool,
}

pub fn predict(n: usize, mechanism: Mechanism) -> Result<Prediction> {
    let h = harmonic(n)?;
    let nf = n as f64;
    Ok(match mechanism {
        Mechanism::Da => Prediction {
            n,
            mechanism,
            unenvied_mean: h,
            unenvied_exact: true,
            envy_nobody_mean: nf / h,
            envy_nobody_exact: false,
            // mean of the untruncated geometric law with parameter 1/H_n
            mean_rank: h,
            mean_rank_exact: false,
        },
        // TTC from a uniform random endowment has the same outcome
        // distribution as RSD.
        Mechanism::Rsd | Mechanism::Ttc => Prediction {
            n,
            mechanism,
            unenvied_mean: h,
            unenvied_exact: true,
            envy_nobody_mean: (nf + 1.0) / 2.0,
            envy_nobody_exact: true,
            mean_rank: rsd_mean_rank(n),
            mean_rank_exact: true,
        },
    })
}

/// Expected mean rank under RSD. The chooser facing `m` free schools gets
/// the best of `m` uniformly placed positions among `n`, whose expected
/// rank is `(n + 1)/(m + 1)`; averaging over `m = 1..n` gives
/// `(n + 1)(H_{n+1} - 1)/n`.
pub fn rsd_mean_rank(n: usize) -> f64 {
    let nf = n as f64;
    let h_next = (1..=n + 1).rev().map(|k| 1.0 / k as f64).sum::<f64>();
    (nf + 1.0) * (h_next - 1.0) / nf
}

/// `(1/H_n)(1 - 1/H_n)^(k-1)`, not renormalized over `1..=n`.
pub fn geometric_rank_pmf(k: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    let p = 1.0 / harmonic(n)?;
    Ok(p * (1.0 - p).powi(k as i32 - 1))
}

/// Probability that the `k`-th chooser under RSD is envied by nobody:
/// `1 / (n - k + 1)`.
pub fn rsd_position_unenvied_prob(k: usize, n: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    Ok(1.0 / (n - k + 1) as f64)
}
