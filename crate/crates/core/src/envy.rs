//! Envy graphs and the statistics derived from them.
//!
//! Student `i` envies student `j` when `i` strictly prefers `j`'s school to
//! their own. With complete lists every school is held by someone, so the
//! students `i` envies are exactly the holders of the schools ranked above
//! their match: their out-degree is their rank minus one.

use std::collections::BTreeSet;

use crate::mechanisms::{ProposalLog, SequentialDaRun};
use crate::model::{MarketInstance, Matching, PreferenceTable};

/// Default largest market for which experiments materialize the edge set.
pub const DEFAULT_GRAPH_MAX_N: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvyGraph {
    out_edges: Vec<Vec<usize>>,
    in_degree: Vec<usize>,
}

impl EnvyGraph {
    pub fn n(&self) -> usize {
        self.out_edges.len()
    }

    /// Students envied by `i`.
    pub fn envies(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out_edges[from].contains(&to)
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_edges[i].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_degree[i]
    }

    pub fn degrees(&self) -> EnvyDegrees {
        EnvyDegrees {
            in_degree: self.in_degree.clone(),
            out_degree: self.out_edges.iter().map(Vec::len).collect(),
        }
    }
}

pub fn build_envy_graph(market: &MarketInstance, matching: &Matching) -> EnvyGraph {
    envy_graph_from_prefs(&market.student_prefs, matching)
}

/// Envy depends on student rankings only.
pub fn envy_graph_from_prefs(prefs: &PreferenceTable, matching: &Matching) -> EnvyGraph {
    let n = prefs.n();
    let holder = matching.holders();
    let mut out_edges = Vec::with_capacity(n);
    let mut in_degree = vec![0; n];
    for i in 0..n {
        let own = prefs.position(i, matching.school_of(i));
        let edges: Vec<usize> = (0..own).map(|k| holder[prefs.choice(i, k)]).collect();
        for &j in &edges {
            in_degree[j] += 1;
        }
        out_edges.push(edges);
    }
    EnvyGraph { out_edges, in_degree }
}

/// Envy graph of a sequential DA run. Each student's revealed prefix ends
/// at their match, so the prefix is all that is needed.
pub fn build_envy_graph_from_run(run: &SequentialDaRun) -> EnvyGraph {
    let holder = run.matching.holders();
    let mut in_degree = vec![0; run.matching.n()];
    let out_edges = run
        .streams
        .iter()
        .map(|s| {
            let prefix = s.revealed();
            let edges: Vec<usize> = prefix[..prefix.len() - 1].iter().map(|&x| holder[x]).collect();
            for &j in &edges {
                in_degree[j] += 1;
            }
            edges
        })
        .collect();
    EnvyGraph { out_edges, in_degree }
}

pub fn unenvied_count(graph: &EnvyGraph) -> usize {
    graph.in_degree.iter().filter(|&&d| d == 0).count()
}

pub fn envy_nobody_count(graph: &EnvyGraph) -> usize {
    graph.out_edges.iter().filter(|e| e.is_empty()).count()
}

/// In- and out-degrees of the envy graph without storing its edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvyDegrees {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

impl EnvyDegrees {
    /// Degrees from a full market. Work is proportional to the sum of ranks.
    pub fn from_market(market: &MarketInstance, matching: &Matching) -> Self {
        Self::from_prefs(&market.student_prefs, matching)
    }

    pub fn from_prefs(prefs: &PreferenceTable, matching: &Matching) -> Self {
        let n = prefs.n();
        let holder = matching.holders();
        let mut in_degree = vec![0; n];
        let mut out_degree = vec![0; n];
        for i in 0..n {
            let own = prefs.position(i, matching.school_of(i));
            out_degree[i] = own;
            for k in 0..own {
                in_degree[holder[prefs.choice(i, k)]] += 1;
            }
        }
        EnvyDegrees { in_degree, out_degree }
    }

    /// Degrees from a sequential DA run, using only proposal counts: the
    /// students who envy `i` are the other proposers to `i`'s school.
    pub fn from_sequential(run: &SequentialDaRun) -> Self {
        let per_school = run.log.proposals_per_school();
        let m = &run.matching;
        EnvyDegrees {
            in_degree: (0..m.n()).map(|i| per_school[m.school_of(i)] - 1).collect(),
            out_degree: run.ranks().into_iter().map(|r| r - 1).collect(),
        }
    }

    pub fn unenvied(&self) -> usize {
        self.in_degree.iter().filter(|&&d| d == 0).count()
    }

    pub fn envy_nobody(&self) -> usize {
        self.out_degree.iter().filter(|&&d| d == 0).count()
    }
}

/// `count(k)` students are matched to their `k`-th choice, `k` in `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankHistogram {
    counts: Vec<usize>,
}

impl RankHistogram {
    pub fn from_ranks(n: usize, ranks: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = vec![0; n];
        for r in ranks {
            counts[r - 1] += 1;
        }
        RankHistogram { counts }
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k - 1]
    }

    /// Counts indexed from rank 1.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds another histogram of the same size.
    pub fn merge(&mut self, other: &RankHistogram) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.count(k) as f64 / self.total() as f64
    }
}

pub fn rank_histogram(market: &MarketInstance, matching: &Matching) -> RankHistogram {
    RankHistogram::from_ranks(market.n(), matching.ranks(&market.student_prefs))
}

/// Schools that received proposals from exactly one student.
pub fn under_demanded_schools(log: &ProposalLog) -> BTreeSet<usize> {
    log.proposals_per_school()
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c == 1)
        .map(|(s, _)| s)
        .collect()
}
