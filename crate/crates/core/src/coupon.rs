//! Coupon collector: uniform draws over `n` types until every type has been
//! seen, and the same quantities read off a sequential DA raw-draw log.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanisms::ProposalLog;
use crate::model::{Seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectorRun {
    pub n: usize,
    /// Draws until all types were seen.
    pub stopping_time: usize,
    /// Types seen exactly once at the stopping time.
    pub singleton_count: usize,
}

pub fn run_collector(n: usize, seed: Seed) -> Result<CollectorRun> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    let mut rng = seed.rng(Stream::Coupon, 0);
    let mut seen = vec![0u32; n];
    let mut distinct = 0;
    let mut draws = 0;
    while distinct < n {
        let t = rng.random_range(0..n);
        draws += 1;
        if seen[t] == 0 {
            distinct += 1;
        }
        seen[t] += 1;
    }
    Ok(CollectorRun {
        n,
        stopping_time: draws,
        singleton_count: seen.iter().filter(|&&c| c == 1).count(),
    })
}

/// Schools that occur exactly once among the raw draws of a finished run.
pub fn singleton_count_from_da(log: &ProposalLog) -> usize {
    log.raw_draws_per_school().into_iter().filter(|&c| c == 1).count()
}

/// One-based index of the raw draw at which every school had appeared, or
/// `None` if some school never appears.
pub fn stopping_time_from_da(log: &ProposalLog) -> Option<usize> {
    let mut seen = vec![false; log.n];
    let mut distinct = 0;
    for (t, d) in log.raw_draws.iter().enumerate() {
        if !seen[d.school] {
            seen[d.school] = true;
            distinct += 1;
            if distinct == log.n {
                return Some(t + 1);
            }
        }
    }
    None
}
