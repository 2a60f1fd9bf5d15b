//! Market primitives: preference tables, random instances, lazily revealed
//! preferences and matchings.
//!
//! Every random object is derived from a [`Seed`]. A seed names one
//! replication of an experiment; each consumer inside that replication
//! (student preferences, school priorities, the raw draws of student `i`,
//! the serial order, ...) reads from its own ChaCha stream, so results do
//! not depend on the order in which consumers happen to pull numbers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mix of several words.
pub fn mix64(parts: &[u64]) -> u64 {
    let mut h = 0x6a09_e667_f3bc_c908u64;
    for &p in parts {
        h = splitmix64(h.wrapping_add(GOLDEN_GAMMA) ^ splitmix64(p.wrapping_add(GOLDEN_GAMMA)));
    }
    h
}

/// Independent random streams available inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    StudentPrefs = 1,
    SchoolPriorities = 2,
    StudentDraws = 3,
    Queue = 4,
    SerialOrder = 5,
    Endowment = 6,
    Coupon = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed {
    pub master_seed: u64,
    pub replication_index: u64,
}

impl Seed {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        Seed {
            master_seed,
            replication_index,
        }
    }

    /// Single 64-bit digest of the seed, used in per-replication CSV rows.
    pub fn key(&self) -> u64 {
        mix64(&[self.master_seed, self.replication_index])
    }

    /// Generator for `stream`, sub-stream `index`.
    ///
    /// The ChaCha key is derived from the seed and the stream label; `index`
    /// selects the ChaCha stream, so `rng(s, i)` and `rng(s, j)` never
    /// overlap for `i != j`.
    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        let key = mix64(&[self.master_seed, self.replication_index, stream as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(index);
        rng
    }
}

/// `n` strict rankings over `0..n`, stored row-major together with the
/// inverse (item -> position) so comparisons are O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceTable {
    n: usize,
    order: Vec<u32>,
    position: Vec<u32>,
}

impl PreferenceTable {
    pub fn from_rows(what: &'static str, rows: &[Vec<usize>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyMarket);
        }
        let mut order = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if !is_permutation(row, n) {
                return Err(Error::NotAPermutation { what, row: i, n });
            }
            order.extend(row.iter().map(|&x| x as u32));
        }
        Ok(Self::from_flat(n, order))
    }

    fn from_flat(n: usize, order: Vec<u32>) -> Self {
        let mut position = vec![0u32; n * n];
        for i in 0..n {
            for (p, &x) in order[i * n..(i + 1) * n].iter().enumerate() {
                position[i * n + x as usize] = p as u32;
            }
        }
        PreferenceTable { n, order, position }
    }

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order = Vec::with_capacity(n * n);
        for _ in 0..n {
            let start = order.len();
            order.extend(0..n as u32);
            order[start..].shuffle(rng);
        }
        Self::from_flat(n, order)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ranking of agent `i`, most preferred first.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.order[i * self.n..(i + 1) * self.n]
    }

    /// Zero-based position of `x` in agent `i`'s ranking.
    #[inline]
    pub fn position(&self, i: usize, x: usize) -> usize {
        self.position[i * self.n + x] as usize
    }

    /// The `k`-th choice (zero-based) of agent `i`.
    #[inline]
    pub fn choice(&self, i: usize, k: usize) -> usize {
        self.order[i * self.n + k] as usize
    }

    #[inline]
    pub fn prefers(&self, i: usize, a: usize, b: usize) -> bool {
        self.position(i, a) < self.position(i, b)
    }

    pub fn to_rows(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&x| x as usize).collect())
            .collect()
    }
}

pub(crate) fn is_permutation(row: &[usize], n: usize) -> bool {
    if row.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &x in row {
        if x >= n || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

/// A complete one-to-one school choice problem with `n` students and `n`
/// schools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketInstance {
    pub student_prefs: PreferenceTable,
    pub school_priorities: PreferenceTable,
}

impl MarketInstance {
    pub fn new(student_prefs: &[Vec<usize>], school_priorities: &[Vec<usize>]) -> Result<Self> {
        let student_prefs = PreferenceTable::from_rows("student_prefs", student_prefs)?;
        let school_priorities = PreferenceTable::from_rows("school_priorities", school_priorities)?;
        if student_prefs.n() != school_priorities.n() {
            return Err(Error::WrongRowCount {
                what: "school_priorities",
                expected: student_prefs.n(),
                found: school_priorities.n(),
            });
        }
        Ok(MarketInstance {
            student_prefs,
            school_priorities,
        })
    }

    pub(crate) fn from_tables(student_prefs: PreferenceTable, school_priorities: PreferenceTable) -> Self {
        debug_assert_eq!(student_prefs.n(), school_priorities.n());
        MarketInstance {
            student_prefs,
            school_priorities,
        }
    }

    pub fn n(&self) -> usize {
        self.student_prefs.n()
    }
}

/// Uniform random market: `2n` independent uniform permutations.
pub fn generate_market(n: usize, seed: Seed) -> Result<MarketInstance> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    let students = random_student_prefs(n, seed)?;
    let schools = random_priorities(n, seed);
    Ok(MarketInstance::from_tables(students, schools))
}

/// The student side of [`generate_market`] for the same seed.
pub fn random_student_prefs(n: usize, seed: Seed) -> Result<PreferenceTable> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    Ok(PreferenceTable::random(n, &mut seed.rng(Stream::StudentPrefs, 0)))
}

pub(crate) fn random_priorities(n: usize, seed: Seed) -> PreferenceTable {
    PreferenceTable::random(n, &mut seed.rng(Stream::SchoolPriorities, 0))
}

/// One consumed raw draw: `student` read `school` from their stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawDraw {
    pub student: usize,
    pub school: usize,
}

#[derive(Debug, Clone)]
enum DrawSource {
    Rng(ChaCha8Rng),
    Scripted(std::vec::IntoIter<usize>),
}

/// A student's preferences revealed one school at a time from i.i.d.
/// uniform raw draws, keeping only the first occurrence of each school.
#[derive(Debug, Clone)]
pub struct LazyPreferenceStream {
    student: usize,
    n: usize,
    source: DrawSource,
    seen: Vec<bool>,
    emitted: Vec<usize>,
}

impl LazyPreferenceStream {
    pub fn new(student: usize, n: usize, seed: Seed) -> Self {
        Self::with_source(student, n, DrawSource::Rng(seed.rng(Stream::StudentDraws, student as u64)))
    }

    /// Stream replaying a fixed raw-draw sequence. Panics if the sequence
    /// runs out before a request is satisfied.
    pub fn scripted(student: usize, n: usize, draws: Vec<usize>) -> Self {
        assert!(draws.iter().all(|&s| s < n), "scripted draw out of range");
        Self::with_source(student, n, DrawSource::Scripted(draws.into_iter()))
    }

    fn with_source(student: usize, n: usize, source: DrawSource) -> Self {
        LazyPreferenceStream {
            student,
            n,
            source,
            seen: vec![false; n],
            emitted: Vec::new(),
        }
    }

    pub fn student(&self) -> usize {
        self.student
    }

    /// Schools revealed so far, most preferred first.
    pub fn revealed(&self) -> &[usize] {
        &self.emitted
    }

    pub fn is_exhausted(&self) -> bool {
        self.emitted.len() == self.n
    }

    fn raw(&mut self) -> usize {
        match &mut self.source {
            DrawSource::Rng(rng) => rng.random_range(0..self.n),
            DrawSource::Scripted(it) => it.next().expect("scripted raw draws exhausted"),
        }
    }

    /// Next untried school. Every raw draw read, including discarded
    /// repeats, is appended to `draw_log`.
    pub fn next_proposal(&mut self, draw_log: &mut Vec<RawDraw>) -> Result<usize> {
        if self.is_exhausted() {
            return Err(Error::StreamExhausted { student: self.student });
        }
        loop {
            let school = self.raw();
            draw_log.push(RawDraw {
                student: self.student,
                school,
            });
            if !self.seen[school] {
                self.seen[school] = true;
                self.emitted.push(school);
                return Ok(school);
            }
        }
    }

    /// Full ranking: the revealed prefix followed by the rest of the stream.
    /// Draws read here are not logged and the stream itself is untouched.
    pub fn completed_ranking(&self) -> Vec<usize> {
        let mut rest = self.clone();
        let mut scratch = Vec::new();
        while !rest.is_exhausted() {
            scratch.clear();
            rest.next_proposal(&mut scratch).expect("not exhausted");
        }
        rest.emitted
    }
}

/// Preference prefixes revealed so far, one row per stream.
pub fn realized_profile(streams: &[LazyPreferenceStream]) -> Vec<Vec<usize>> {
    streams.iter().map(|s| s.revealed().to_vec()).collect()
}

/// Student `i` is assigned school `assignment[i]`; always a bijection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    assignment: Vec<usize>,
}

impl Matching {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::EmptyMarket);
        }
        if !is_permutation(&assignment, n) {
            return Err(Error::NotABijection { n });
        }
        Ok(Matching { assignment })
    }

    pub(crate) fn from_vec_unchecked(assignment: Vec<usize>) -> Self {
        debug_assert!(is_permutation(&assignment, assignment.len()));
        Matching { assignment }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn school_of(&self, student: usize) -> usize {
        self.assignment[student]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Inverse map: school -> student.
    pub fn holders(&self) -> Vec<usize> {
        let mut holder = vec![0; self.n()];
        for (i, &s) in self.assignment.iter().enumerate() {
            holder[s] = i;
        }
        holder
    }

    /// One-based rank of each student's school in their ranking.
    pub fn ranks(&self, prefs: &PreferenceTable) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &s)| prefs.position(i, s) + 1)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn n1_market_is_trivial() {
        let m = generate_market(1, Seed::new(7, 3)).unwrap();
        assert_eq!(m.student_prefs.to_rows(), vec![vec![0]]);
        assert_eq!(m.school_priorities.to_rows(), vec![vec![0]]);
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(generate_market(0, Seed::new(1, 0)), Err(Error::EmptyMarket)));
        assert!(Matching::new(vec![]).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_market(2, Seed::new(99, 5)).unwrap();
        let b = generate_market(2, Seed::new(99, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate_market(40, Seed::new(99, 5)).unwrap();
        let d = generate_market(40, Seed::new(99, 6)).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn rows_are_permutations_small_n() {
        for n in 1..=3 {
            for rep in 0..200 {
                let m = generate_market(n, Seed::new(11, rep)).unwrap();
                for t in [&m.student_prefs, &m.school_priorities] {
                    for i in 0..n {
                        let row: Vec<usize> = t.row(i).iter().map(|&x| x as usize).collect();
                        assert!(is_permutation(&row, n));
                        for (p, &x) in row.iter().enumerate() {
                            assert_eq!(t.position(i, x), p);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_rows_rejected() {
        assert!(MarketInstance::new(&[vec![0, 0], vec![1, 0]], &[vec![0, 1], vec![1, 0]]).is_err());
        assert!(MarketInstance::new(&[vec![0, 1], vec![1, 0]], &[vec![0, 1]]).is_err());
        assert!(MarketInstance::new(&[vec![0, 2], vec![1, 0]], &[vec![0, 1], vec![1, 0]]).is_err());
    }

    #[test]
    fn scripted_stream_dedups_repeats() {
        let mut log = Vec::new();
        let mut s = LazyPreferenceStream::scripted(0, 3, vec![2, 2, 0, 1]);
        assert_eq!(s.next_proposal(&mut log).unwrap(), 2);
        assert_eq!(s.next_proposal(&mut log).unwrap(), 0);
        assert_eq!(log.len(), 3);
        assert_eq!(log[1], RawDraw { student: 0, school: 2 });
        assert_eq!(s.revealed(), &[2, 0]);
    }

    #[test]
    fn single_school_stream_exhausts() {
        let mut log = Vec::new();
        let mut s = LazyPreferenceStream::new(0, 1, Seed::new(1, 1));
        assert_eq!(s.next_proposal(&mut log).unwrap(), 0);
        assert!(matches!(s.next_proposal(&mut log), Err(Error::StreamExhausted { student: 0 })));
    }

    #[test]
    fn realized_profile_prefixes() {
        let streams = vec![
            LazyPreferenceStream::scripted(0, 2, vec![1, 1, 0]),
            LazyPreferenceStream::scripted(1, 2, vec![0]),
        ];
        assert_eq!(realized_profile(&streams), vec![Vec::<usize>::new(), vec![]]);
        let mut streams = streams;
        let mut log = Vec::new();
        streams[0].next_proposal(&mut log).unwrap();
        streams[0].next_proposal(&mut log).unwrap();
        assert_eq!(realized_profile(&streams)[0], vec![1, 0]);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn completed_ranking_extends_prefix() {
        let mut log = Vec::new();
        let mut s = LazyPreferenceStream::new(4, 30, Seed::new(5, 0));
        for _ in 0..4 {
            s.next_proposal(&mut log).unwrap();
        }
        let full = s.completed_ranking();
        assert!(is_permutation(&full, 30));
        assert_eq!(&full[..4], s.revealed());
        assert_eq!(s.revealed().len(), 4);
    }

    // Empirical frequency of each ranking of 3 schools must be 1/6 within
    // 3 binomial standard errors, for both the eager and the lazy route.
    fn assert_uniform_over_perms(counts: &HashMap<Vec<usize>, u64>, total: u64) {
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let se = (p * (1.0 - p) / total as f64).sqrt();
        for (perm, &c) in counts {
            let f = c as f64 / total as f64;
            assert!((f - p).abs() < 3.0 * se, "{perm:?}: {f} vs {p} (se {se})");
        }
    }

    #[test]
    fn eager_rankings_uniform_n3() {
        let total = 10_000;
        let mut counts = HashMap::new();
        for rep in 0..total {
            let m = generate_market(3, Seed::new(2024, rep)).unwrap();
            *counts.entry(m.student_prefs.to_rows()[0].clone()).or_insert(0u64) += 1;
        }
        assert_uniform_over_perms(&counts, total);
    }

    #[test]
    fn lazy_rankings_match_eager_distribution_n3() {
        let total = 100_000;
        let mut lazy = HashMap::new();
        let mut eager = HashMap::new();
        for rep in 0..total {
            let s = LazyPreferenceStream::new(0, 3, Seed::new(77, rep));
            *lazy.entry(s.completed_ranking()).or_insert(0u64) += 1;
            let m = generate_market(3, Seed::new(78, rep)).unwrap();
            *eager.entry(m.student_prefs.to_rows()[0].clone()).or_insert(0u64) += 1;
        }
        assert_uniform_over_perms(&lazy, total);
        assert_uniform_over_perms(&eager, total);
        // two-sample difference of proportions
        let p = 1.0 / 6.0;
        let se = (2.0 * p * (1.0 - p) / total as f64).sqrt();
        for (perm, &c) in &lazy {
            let d = c as f64 / total as f64 - eager[perm] as f64 / total as f64;
            assert!(d.abs() < 3.0 * se, "{perm:?}: diff {d}");
        }
    }

    #[test]
    fn replications_uncorrelated_first_choice() {
        // Indicator "student 0 ranks school 0 first" in replication r and r+1.
        let total = 20_000u64;
        let n = 4;
        let ind: Vec<f64> = (0..=total)
            .map(|r| {
                let m = generate_market(n, Seed::new(3, r)).unwrap();
                f64::from(m.student_prefs.choice(0, 0) == 0)
            })
            .collect();
        let mean = ind.iter().sum::<f64>() / ind.len() as f64;
        let var = ind.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ind.len() as f64;
        let cov = ind
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / total as f64;
        let corr = cov / var;
        let se = 1.0 / (total as f64).sqrt();
        assert!(corr.abs() < 3.0 * se, "lag-1 correlation {corr}");
    }
}
