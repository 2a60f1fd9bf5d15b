//! Student-proposing deferred acceptance (round-based and one-proposal-at-a-
//! time), random serial dictatorship and top trading cycles.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    is_permutation, random_priorities, LazyPreferenceStream, MarketInstance, Matching, PreferenceTable, RawDraw,
    Seed, Stream,
};

const NONE: usize = usize::MAX;

/// Student-optimal stable matching, computed in rounds: every unmatched
/// student applies to their next school, then each school keeps the best of
/// its held student and the new applicants.
pub fn deferred_acceptance(market: &MarketInstance) -> Matching {
    let n = market.n();
    let prefs = &market.student_prefs;
    let prio = &market.school_priorities;
    let mut held = vec![NONE; n];
    let mut next = vec![0usize; n];
    let mut free: Vec<usize> = (0..n).collect();
    let mut applications = Vec::with_capacity(n);
    while !free.is_empty() {
        applications.clear();
        for &i in &free {
            applications.push((prefs.choice(i, next[i]), i));
            next[i] += 1;
        }
        free.clear();
        for &(s, i) in &applications {
            let j = held[s];
            if j == NONE {
                held[s] = i;
            } else if prio.prefers(s, i, j) {
                held[s] = i;
                free.push(j);
            } else {
                free.push(i);
            }
        }
    }
    let mut assignment = vec![0; n];
    for (s, &i) in held.iter().enumerate() {
        assignment[i] = s;
    }
    Matching::from_vec_unchecked(assignment)
}

/// Which unmatched student proposes next in [`sequential_da`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueueDiscipline {
    Fifo,
    #[default]
    Lifo,
    /// Uniformly random unmatched student, driven by the given sub-seed.
    Random(u64),
}

impl FromStr for QueueDiscipline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fifo" => Ok(QueueDiscipline::Fifo),
            "lifo" => Ok(QueueDiscipline::Lifo),
            "random" => Ok(QueueDiscipline::Random(0)),
            _ => match s.strip_prefix("random:") {
                Some(k) => k
                    .parse()
                    .map(QueueDiscipline::Random)
                    .map_err(|e| format!("bad random sub-seed {k:?}: {e}")),
                None => Err(format!("unknown queue discipline {s:?} (expected fifo, lifo or random)")),
            },
        }
    }
}

impl fmt::Display for QueueDiscipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueDiscipline::Fifo => f.write_str("fifo"),
            QueueDiscipline::Lifo => f.write_str("lifo"),
            QueueDiscipline::Random(k) => write!(f, "random:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The school now holds the proposer; `displaced` is who it let go.
    Accepted { displaced: Option<usize> },
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub student: usize,
    pub school: usize,
    pub outcome: Outcome,
}

/// Everything that happened during one sequential DA run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProposalLog {
    pub n: usize,
    pub entries: Vec<Proposal>,
    /// Every raw preference draw read, in order, including repeats.
    pub raw_draws: Vec<RawDraw>,
}

impl ProposalLog {
    /// Number of proposals received by each school. A student never
    /// proposes twice to the same school, so this is also the number of
    /// distinct proposers.
    pub fn proposals_per_school(&self) -> Vec<usize> {
        let mut count = vec![0; self.n];
        for p in &self.entries {
            count[p.school] += 1;
        }
        count
    }

    /// How often each school occurs among the raw draws.
    pub fn raw_draws_per_school(&self) -> Vec<usize> {
        let mut count = vec![0; self.n];
        for d in &self.raw_draws {
            count[d.school] += 1;
        }
        count
    }
}

/// Result of [`sequential_da`]: the matching, the log, and the random
/// state needed to replay the run.
#[derive(Debug, Clone)]
pub struct SequentialDaRun {
    pub school_priorities: PreferenceTable,
    pub streams: Vec<LazyPreferenceStream>,
    pub matching: Matching,
    pub log: ProposalLog,
}

impl SequentialDaRun {
    /// One-based rank of each student's match; equals their proposal count.
    pub fn ranks(&self) -> Vec<usize> {
        self.streams.iter().map(|s| s.revealed().len()).collect()
    }

    /// Market whose student rankings complete the revealed prefixes.
    pub fn completed_market(&self) -> MarketInstance {
        let rows: Vec<Vec<usize>> = self.streams.iter().map(|s| s.completed_ranking()).collect();
        let students = PreferenceTable::from_rows("student_prefs", &rows).expect("completed rankings are permutations");
        MarketInstance::from_tables(students, self.school_priorities.clone())
    }
}

/// McVitie-Wilson DA: one unmatched student at a time applies to their best
/// untried school. Student preferences are revealed lazily from raw draws;
/// school priorities are drawn up front.
pub fn sequential_da(n: usize, seed: Seed, queue: QueueDiscipline) -> Result<SequentialDaRun> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    let priorities = random_priorities(n, seed);
    let streams = (0..n).map(|i| LazyPreferenceStream::new(i, n, seed)).collect();
    Ok(run_sequential(priorities, streams, queue, seed))
}

/// Sequential DA on a fully specified market.
pub fn sequential_da_on(market: &MarketInstance, queue: QueueDiscipline, seed: Seed) -> (Matching, ProposalLog) {
    let n = market.n();
    let streams = (0..n)
        .map(|i| {
            let row = market.student_prefs.row(i).iter().map(|&x| x as usize).collect();
            LazyPreferenceStream::scripted(i, n, row)
        })
        .collect();
    let run = run_sequential(market.school_priorities.clone(), streams, queue, seed);
    (run.matching, run.log)
}

fn run_sequential(
    priorities: PreferenceTable,
    mut streams: Vec<LazyPreferenceStream>,
    queue: QueueDiscipline,
    seed: Seed,
) -> SequentialDaRun {
    let n = priorities.n();
    let mut held = vec![NONE; n];
    let mut log = ProposalLog {
        n,
        entries: Vec::with_capacity(2 * n),
        raw_draws: Vec::with_capacity(2 * n),
    };
    let mut waiting: VecDeque<usize> = (0..n).collect();
    let mut queue_rng = match queue {
        QueueDiscipline::Random(k) => Some(seed.rng(Stream::Queue, k)),
        _ => None,
    };

    loop {
        let i = match queue {
            QueueDiscipline::Fifo => waiting.pop_front(),
            QueueDiscipline::Lifo => waiting.pop_back(),
            QueueDiscipline::Random(_) => {
                if waiting.is_empty() {
                    None
                } else {
                    let rng = queue_rng.as_mut().expect("random queue has a generator");
                    let k = rng.random_range(0..waiting.len());
                    waiting.swap_remove_back(k)
                }
            }
        };
        let Some(i) = i else { break };
        let s = streams[i]
            .next_proposal(&mut log.raw_draws)
            .expect("an unmatched student always has an untried school");
        let j = held[s];
        let outcome = if j == NONE {
            held[s] = i;
            Outcome::Accepted { displaced: None }
        } else if priorities.prefers(s, i, j) {
            held[s] = i;
            waiting.push_back(j);
            Outcome::Accepted { displaced: Some(j) }
        } else {
            waiting.push_back(i);
            Outcome::Rejected
        };
        log.entries.push(Proposal {
            student: i,
            school: s,
            outcome,
        });
    }

    let mut assignment = vec![0; n];
    for (s, &i) in held.iter().enumerate() {
        assignment[i] = s;
    }
    SequentialDaRun {
        school_priorities: priorities,
        streams,
        matching: Matching::from_vec_unchecked(assignment),
        log,
    }
}

/// Order in which students pick under serial dictatorship; `order[0]` picks
/// first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialOrder(Vec<usize>);

impl SerialOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        if !is_permutation(&order, order.len()) {
            return Err(Error::NotAPermutation {
                what: "serial order",
                row: 0,
                n: order.len(),
            });
        }
        Ok(SerialOrder(order))
    }

    pub fn identity(n: usize) -> Self {
        SerialOrder((0..n).collect())
    }

    pub fn random(n: usize, seed: Seed) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed.rng(Stream::SerialOrder, 0));
        SerialOrder(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Initial ownership for TTC: student `i` owns school `owns[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endowment(Vec<usize>);

impl Endowment {
    pub fn new(owns: Vec<usize>) -> Result<Self> {
        let n = owns.len();
        if !is_permutation(&owns, n) {
            return Err(Error::NotABijection { n });
        }
        Ok(Endowment(owns))
    }

    pub fn random(n: usize, seed: Seed) -> Self {
        let mut owns: Vec<usize> = (0..n).collect();
        owns.shuffle(&mut seed.rng(Stream::Endowment, 0));
        Endowment(owns)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

pub fn rsd(market: &MarketInstance, order: &SerialOrder) -> Result<Matching> {
    serial_dictatorship(&market.student_prefs, order)
}

/// RSD needs only the student rankings.
pub fn serial_dictatorship(prefs: &PreferenceTable, order: &SerialOrder) -> Result<Matching> {
    let n = prefs.n();
    if order.0.len() != n {
        return Err(Error::SizeMismatch {
            market: n,
            other: order.0.len(),
        });
    }
    let mut taken = vec![false; n];
    let mut assignment = vec![0; n];
    for &i in &order.0 {
        let s = prefs
            .row(i)
            .iter()
            .map(|&s| s as usize)
            .find(|&s| !taken[s])
            .expect("fewer students than schools remain");
        taken[s] = true;
        assignment[i] = s;
    }
    Ok(Matching::from_vec_unchecked(assignment))
}

/// Top trading cycles from `endowment`. Each round every remaining student
/// points at the owner of their favourite remaining school; every cycle
/// trades and leaves.
pub fn ttc(market: &MarketInstance, endowment: &Endowment) -> Result<Matching> {
    top_trading_cycles(&market.student_prefs, endowment)
}

/// TTC needs only the student rankings.
pub fn top_trading_cycles(prefs: &PreferenceTable, endowment: &Endowment) -> Result<Matching> {
    let n = prefs.n();
    if endowment.0.len() != n {
        return Err(Error::SizeMismatch {
            market: n,
            other: endowment.0.len(),
        });
    }
    let mut owner = vec![0; n];
    for (i, &s) in endowment.0.iter().enumerate() {
        owner[s] = i;
    }
    let mut gone = vec![false; n]; // by school
    let mut cursor = vec![0usize; n];
    let mut target = vec![0usize; n];
    let mut mark = vec![0u64; n];
    let mut assignment = vec![NONE; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut stamp = 0u64;

    while !remaining.is_empty() {
        for &i in &remaining {
            while gone[prefs.choice(i, cursor[i])] {
                cursor[i] += 1;
            }
            target[i] = owner[prefs.choice(i, cursor[i])];
        }
        for &start in &remaining {
            if mark[start] != 0 {
                continue;
            }
            stamp += 1;
            let mut v = start;
            while mark[v] == 0 {
                mark[v] = stamp;
                v = target[v];
            }
            if mark[v] == stamp && assignment[v] == NONE {
                // v lies on a fresh cycle
                let first = v;
                loop {
                    let next = target[v];
                    assignment[v] = endowment.0[next];
                    v = next;
                    if v == first {
                        break;
                    }
                }
            }
        }
        for &i in &remaining {
            if assignment[i] != NONE {
                gone[endowment.0[i]] = true;
            }
        }
        remaining.retain(|&i| {
            mark[i] = 0;
            assignment[i] == NONE
        });
    }
    Ok(Matching::from_vec_unchecked(assignment))
}

/// Pairs `(student, school)` where both would rather be matched together.
pub fn blocking_pairs(market: &MarketInstance, matching: &Matching) -> Vec<(usize, usize)> {
    let prefs = &market.student_prefs;
    let prio = &market.school_priorities;
    let holder = matching.holders();
    let mut out = Vec::new();
    for i in 0..market.n() {
        let own = prefs.position(i, matching.school_of(i));
        for k in 0..own {
            let s = prefs.choice(i, k);
            if prio.prefers(s, i, holder[s]) {
                out.push((i, s));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_market;

    // Schools: A = 0, B = 1. Both students rank A first; A ranks student 1
    // (index 0) first.
    fn forced_n2() -> MarketInstance {
        MarketInstance::new(&[vec![0, 1], vec![0, 1]], &[vec![0, 1], vec![0, 1]]).unwrap()
    }

    #[test]
    fn da_trivial_and_forced() {
        let m1 = MarketInstance::new(&[vec![0]], &[vec![0]]).unwrap();
        assert_eq!(deferred_acceptance(&m1).assignment(), &[0]);
        let m = forced_n2();
        assert_eq!(deferred_acceptance(&m).assignment(), &[0, 1]);
    }

    #[test]
    fn blocking_pairs_forced_example() {
        let m = forced_n2();
        let bad = Matching::new(vec![1, 0]).unwrap();
        assert_eq!(blocking_pairs(&m, &bad), vec![(0, 0)]);
        assert!(blocking_pairs(&m, &deferred_acceptance(&m)).is_empty());
    }

    #[test]
    fn sequential_n1() {
        let run = sequential_da(1, Seed::new(0, 0), QueueDiscipline::Lifo).unwrap();
        assert_eq!(run.matching.assignment(), &[0]);
        assert_eq!(run.log.entries.len(), 1);
        assert_eq!(run.log.raw_draws.len(), 1);
        assert!(sequential_da(0, Seed::new(0, 0), QueueDiscipline::Lifo).is_err());
    }

    #[test]
    fn sequential_on_forced_example() {
        let m = forced_n2();
        for q in [QueueDiscipline::Fifo, QueueDiscipline::Lifo, QueueDiscipline::Random(3)] {
            let (matching, log) = sequential_da_on(&m, q, Seed::new(1, 1));
            assert_eq!(matching.assignment(), &[0, 1]);
            assert_eq!(log.proposals_per_school(), vec![2, 1]);
        }
    }

    #[test]
    fn queue_invariance_and_replay() {
        for rep in 0..200 {
            let seed = Seed::new(31, rep);
            let base = sequential_da(12, seed, QueueDiscipline::Lifo).unwrap();
            let fifo = sequential_da(12, seed, QueueDiscipline::Fifo).unwrap();
            let rnd = sequential_da(12, seed, QueueDiscipline::Random(rep)).unwrap();
            assert_eq!(base.matching, fifo.matching);
            assert_eq!(base.matching, rnd.matching);
            let market = base.completed_market();
            assert_eq!(deferred_acceptance(&market), base.matching);
            assert!(blocking_pairs(&market, &base.matching).is_empty());
        }
    }

    #[test]
    fn queue_parse_roundtrip() {
        for q in [QueueDiscipline::Fifo, QueueDiscipline::Lifo, QueueDiscipline::Random(17)] {
            assert_eq!(q.to_string().parse::<QueueDiscipline>().unwrap(), q);
        }
        assert!("stack".parse::<QueueDiscipline>().is_err());
    }

    #[test]
    fn rsd_forced_and_first_gets_top() {
        let m = forced_n2();
        assert_eq!(rsd(&m, &SerialOrder::identity(2)).unwrap().assignment(), &[0, 1]);
        for rep in 0..50 {
            let m = generate_market(15, Seed::new(8, rep)).unwrap();
            let order = SerialOrder::random(15, Seed::new(8, rep));
            let x = rsd(&m, &order).unwrap();
            let first = order.as_slice()[0];
            assert_eq!(m.student_prefs.position(first, x.school_of(first)), 0);
        }
        assert!(rsd(&m, &SerialOrder::identity(3)).is_err());
        assert!(SerialOrder::new(vec![0, 0]).is_err());
    }

    #[test]
    fn ttc_self_loops_and_improvement() {
        let m = MarketInstance::new(&[vec![1, 0, 2], vec![2, 1, 0], vec![0, 2, 1]], &vec![vec![0, 1, 2]; 3]).unwrap();
        let own_top = Endowment::new(vec![1, 2, 0]).unwrap();
        assert_eq!(ttc(&m, &own_top).unwrap().assignment(), &[1, 2, 0]);

        let m1 = MarketInstance::new(&[vec![0]], &[vec![0]]).unwrap();
        assert_eq!(ttc(&m1, &Endowment::new(vec![0]).unwrap()).unwrap().assignment(), &[0]);

        for rep in 0..200 {
            let m = generate_market(9, Seed::new(12, rep)).unwrap();
            let e = Endowment::random(9, Seed::new(12, rep));
            let x = ttc(&m, &e).unwrap();
            for i in 0..9 {
                assert!(m.student_prefs.position(i, x.school_of(i)) <= m.student_prefs.position(i, e.as_slice()[i]));
            }
        }
    }

    #[test]
    fn ttc_simple_swap() {
        // 0 owns school 0 but wants 1; 1 owns school 1 but wants 0.
        let m = MarketInstance::new(&[vec![1, 0], vec![0, 1]], &vec![vec![0, 1]; 2]).unwrap();
        let x = ttc(&m, &Endowment::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(x.assignment(), &[1, 0]);
    }
}
