//! Monte Carlo runner: independent replications per `(n, mechanism)`,
//! aggregated into mean / standard-error records next to the closed-form
//! predictions, and persisted as long-format CSV.
//!
//! Replication `r` of `(n, mechanism)` uses
//! `Seed::new(mix64([master, n, mechanism]), r)`, so results do not depend
//! on the thread count or on which other sizes are in the sweep.

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::coupon::{run_collector, CollectorRun};
use crate::envy::{build_envy_graph_from_run, envy_graph_from_prefs, envy_nobody_count, unenvied_count, EnvyDegrees, EnvyGraph, DEFAULT_GRAPH_MAX_N};
use crate::error::{Error, Result};
use crate::mechanisms::{sequential_da, serial_dictatorship, top_trading_cycles, Endowment, QueueDiscipline, SerialOrder};
use crate::model::{mix64, random_student_prefs, Seed};
use crate::stats::RunningStats;
use crate::theory::{predict, Mechanism};

pub const DEFAULT_SIZES: [usize; 7] = [10, 25, 50, 100, 250, 500, 1000];
pub const DEFAULT_REPLICATIONS: usize = 2_000;
pub const AGGREGATE_HEADER: [&str; 8] = [
    "n",
    "mechanism",
    "metric",
    "mean",
    "std_error",
    "replications",
    "prediction",
    "prediction_exact",
];
pub const REPLICATION_HEADER: [&str; 8] = [
    "n",
    "mechanism",
    "replication",
    "seed",
    "unenvied",
    "envy_nobody",
    "total_proposals",
    "mean_rank",
];
const COUPON_STREAM_ID: u64 = 0xC0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Unenvied,
    EnvyNobody,
    MeanRank,
    TopChoice,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Unenvied, Metric::EnvyNobody, Metric::MeanRank, Metric::TopChoice];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Unenvied => "unenvied",
            Metric::EnvyNobody => "envy_nobody",
            Metric::MeanRank => "mean_rank",
            Metric::TopChoice => "top_choice",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?} (expected unenvied, envy_nobody, mean_rank or top_choice)"))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub mechanisms: Vec<Mechanism>,
    pub metrics: Vec<Metric>,
    pub master_seed: u64,
    pub queue: QueueDiscipline,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Largest `n` for which the envy graph's edges are stored.
    pub graph_max_n: usize,
    pub output_path: Option<PathBuf>,
    pub per_replication_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            replications: DEFAULT_REPLICATIONS,
            mechanisms: vec![Mechanism::Da],
            metrics: vec![Metric::Unenvied, Metric::EnvyNobody],
            master_seed: 1,
            queue: QueueDiscipline::default(),
            threads: None,
            graph_max_n: DEFAULT_GRAPH_MAX_N,
            output_path: None,
            per_replication_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Config("at least one size is required".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be ≥ 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be ≥ 1".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::Config("at least one mechanism is required".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Seed of replication `replication` of `(n, mechanism)`.
pub fn replication_seed(master_seed: u64, n: usize, mechanism: Mechanism, replication: u64) -> Seed {
    Seed::new(mix64(&[master_seed, n as u64, mechanism.id()]), replication)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub n: usize,
    pub mechanism: Mechanism,
    pub replication: u64,
    pub seed: u64,
    pub unenvied: usize,
    pub envy_nobody: usize,
    pub top_choice: usize,
    /// DA proposals made; zero for RSD and TTC.
    pub total_proposals: usize,
    pub mean_rank: f64,
}

impl ReplicationRow {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Unenvied => self.unenvied as f64,
            Metric::EnvyNobody => self.envy_nobody as f64,
            Metric::MeanRank => self.mean_rank,
            Metric::TopChoice => self.top_choice as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AggregateRecord {
    pub n: usize,
    pub mechanism: Mechanism,
    pub metric: Metric,
    pub mean: f64,
    /// NaN when only one replication was run.
    pub std_error: f64,
    pub replications: usize,
    pub prediction: f64,
    pub prediction_exact: bool,
}

impl AggregateRecord {
    pub fn std_error_defined(&self) -> bool {
        !self.std_error.is_nan()
    }

    /// `|mean - prediction|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mean - self.prediction).abs() / self.std_error
    }
}

fn same_float(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for AggregateRecord {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.mechanism == o.mechanism
            && self.metric == o.metric
            && same_float(self.mean, o.mean)
            && same_float(self.std_error, o.std_error)
            && self.replications == o.replications
            && same_float(self.prediction, o.prediction)
            && self.prediction_exact == o.prediction_exact
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<AggregateRecord>,
    pub replications: Vec<ReplicationRow>,
}

fn summarize(
    n: usize,
    mechanism: Mechanism,
    replication: u64,
    seed: Seed,
    degrees: EnvyDegrees,
    total_proposals: usize,
) -> ReplicationRow {
    let rank_sum: usize = degrees.out_degree.iter().map(|d| d + 1).sum();
    ReplicationRow {
        n,
        mechanism,
        replication,
        seed: seed.key(),
        unenvied: degrees.unenvied(),
        envy_nobody: degrees.envy_nobody(),
        top_choice: degrees.out_degree.iter().filter(|&&d| d == 0).count(),
        total_proposals,
        mean_rank: rank_sum as f64 / n as f64,
    }
}

fn graph_counts(graph: &EnvyGraph) -> (usize, usize) {
    (unenvied_count(graph), envy_nobody_count(graph))
}

/// One replication of `mechanism` at size `n`.
pub fn run_replication(
    n: usize,
    mechanism: Mechanism,
    master_seed: u64,
    replication: u64,
    queue: QueueDiscipline,
    graph_max_n: usize,
) -> Result<ReplicationRow> {
    let seed = replication_seed(master_seed, n, mechanism, replication);
    let materialize = n <= graph_max_n;
    let row = match mechanism {
        Mechanism::Da => {
            let run = sequential_da(n, seed, queue)?;
            let degrees = EnvyDegrees::from_sequential(&run);
            let proposals = run.log.entries.len();
            let mut row = summarize(n, mechanism, replication, seed, degrees, proposals);
            if materialize {
                let (u, e) = graph_counts(&build_envy_graph_from_run(&run));
                debug_assert_eq!((u, e), (row.unenvied, row.envy_nobody));
                row.unenvied = u;
                row.envy_nobody = e;
            }
            row
        }
        Mechanism::Rsd | Mechanism::Ttc => {
            // school priorities play no part in RSD or TTC
            let prefs = random_student_prefs(n, seed)?;
            let matching = if mechanism == Mechanism::Rsd {
                serial_dictatorship(&prefs, &SerialOrder::random(n, seed))?
            } else {
                top_trading_cycles(&prefs, &Endowment::random(n, seed))?
            };
            let mut row = summarize(n, mechanism, replication, seed, EnvyDegrees::from_prefs(&prefs, &matching), 0);
            if materialize {
                let (u, e) = graph_counts(&envy_graph_from_prefs(&prefs, &matching));
                row.unenvied = u;
                row.envy_nobody = e;
            }
            row
        }
    };
    Ok(row)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn prediction_for(n: usize, mechanism: Mechanism, metric: Metric) -> Result<(f64, bool)> {
    let p = predict(n, mechanism)?;
    Ok(match metric {
        Metric::Unenvied => (p.unenvied_mean, p.unenvied_exact),
        Metric::EnvyNobody | Metric::TopChoice => (p.envy_nobody_mean, p.envy_nobody_exact),
        Metric::MeanRank => (p.mean_rank, p.mean_rank_exact),
    })
}

/// Aggregates rows of one `(n, mechanism)` group, in the given order.
pub fn aggregate(n: usize, mechanism: Mechanism, metrics: &[Metric], rows: &[ReplicationRow]) -> Result<Vec<AggregateRecord>> {
    metrics
        .iter()
        .map(|&metric| {
            let stats: RunningStats = rows.iter().map(|r| r.metric(metric)).collect();
            let (prediction, prediction_exact) = prediction_for(n, mechanism, metric)?;
            Ok(AggregateRecord {
                n,
                mechanism,
                metric,
                mean: stats.mean(),
                std_error: stats.std_error(),
                replications: rows.len(),
                prediction,
                prediction_exact,
            })
        })
        .collect()
}

/// Runs the configured sweep and writes the requested CSV files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let reps = config.replications as u64;
    let mut records = Vec::new();
    let mut all_rows = Vec::new();
    for &n in &config.sizes {
        for &mechanism in &config.mechanisms {
            let rows: Vec<ReplicationRow> = with_pool(config.threads, || {
                (0..reps)
                    .into_par_iter()
                    .map(|r| run_replication(n, mechanism, config.master_seed, r, config.queue, config.graph_max_n))
                    .collect::<Result<Vec<_>>>()
            })??;
            records.extend(aggregate(n, mechanism, &config.metrics, &rows)?);
            all_rows.extend(rows);
        }
    }
    if let Some(path) = &config.output_path {
        write_csv(&records, path)?;
    }
    if let Some(path) = &config.per_replication_path {
        write_replications_csv(&all_rows, path)?;
    }
    Ok(ExperimentOutput {
        records,
        replications: all_rows,
    })
}

/// DA unenvied / envy-nobody series over the configured sizes.
pub fn figure1_table(config: &ExperimentConfig) -> Result<Vec<AggregateRecord>> {
    let cfg = ExperimentConfig {
        mechanisms: vec![Mechanism::Da],
        metrics: vec![Metric::Unenvied, Metric::EnvyNobody],
        ..config.clone()
    };
    Ok(run_experiment(&cfg)?.records)
}

/// Rank histogram pooled over `replications` DA runs at size `n`.
pub fn pooled_da_rank_histogram(
    n: usize,
    replications: usize,
    master_seed: u64,
    queue: QueueDiscipline,
) -> Result<crate::envy::RankHistogram> {
    let hists = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let run = sequential_da(n, replication_seed(master_seed, n, Mechanism::Da, r), queue)?;
            Ok(crate::envy::RankHistogram::from_ranks(n, run.ranks()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = crate::envy::RankHistogram::from_ranks(n, std::iter::empty());
    for h in &hists {
        total.merge(h);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct CouponSummary {
    pub n: usize,
    pub singletons: RunningStats,
    pub stopping_time: RunningStats,
}

pub fn coupon_experiment(n: usize, replications: usize, master_seed: u64, threads: Option<usize>) -> Result<CouponSummary> {
    if replications == 0 {
        return Err(Error::Config("replications must be ≥ 1".into()));
    }
    let key = mix64(&[master_seed, n as u64, COUPON_STREAM_ID]);
    let runs: Vec<CollectorRun> = with_pool(threads, || {
        (0..replications as u64)
            .into_par_iter()
            .map(|r| run_collector(n, Seed::new(key, r)))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(CouponSummary {
        n,
        singletons: runs.iter().map(|r| r.singleton_count as f64).collect(),
        stopping_time: runs.iter().map(|r| r.stopping_time as f64).collect(),
    })
}

/// `%g`-style formatting with six significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_records<W: Write>(records: &[AggregateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.mechanism.to_string(),
            r.metric.to_string(),
            format_float(r.mean),
            format_float(r.std_error),
            r.replications.to_string(),
            format_float(r.prediction),
            r.prediction_exact.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[AggregateRecord], path: &Path) -> Result<()> {
    write_records(records, io::BufWriter::new(File::create(path)?))
}

pub fn write_replications_csv(rows: &[ReplicationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(io::BufWriter::new(File::create(path)?));
    w.write_record(REPLICATION_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.mechanism.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            r.unenvied.to_string(),
            r.envy_nobody.to_string(),
            r.total_proposals.to_string(),
            format_float(r.mean_rank),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<AggregateRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut saw_header = false;
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(idx as u64 + 1, |p| p.line());
        if row.len() != AGGREGATE_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", AGGREGATE_HEADER.len(), row.len()),
            ));
        }
        if idx == 0 {
            if row.iter().ne(AGGREGATE_HEADER) {
                return Err(parse_err(line, "unexpected header".into()));
            }
            saw_header = true;
            continue;
        }
        fn field<T: FromStr>(row: &csv::StringRecord, i: usize) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            row[i]
                .parse()
                .map_err(|e| format!("column {}: {e} ({:?})", AGGREGATE_HEADER[i], &row[i]))
        }
        let parsed = (|| -> std::result::Result<AggregateRecord, String> {
            Ok(AggregateRecord {
                n: field(&row, 0)?,
                mechanism: field(&row, 1)?,
                metric: field(&row, 2)?,
                mean: field(&row, 3)?,
                std_error: field(&row, 4)?,
                replications: field(&row, 5)?,
                prediction: field(&row, 6)?,
                prediction_exact: field(&row, 7)?,
            })
        })();
        records.push(parsed.map_err(|m| parse_err(line, m))?);
    }
    if !saw_header {
        return Err(parse_err(1, "missing header".into()));
    }
    Ok(records)
}
