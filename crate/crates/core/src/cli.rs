//! `envylab` command line: `simulate`, `predict`, `verify`, `coupon`.
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    coupon_experiment, format_float, run_experiment, ExperimentConfig, Metric, DEFAULT_REPLICATIONS,
};
use crate::mechanisms::QueueDiscipline;
use crate::oracle::DEFAULT_MAX_PROFILE_N;
use crate::theory::{harmonic, predict, Mechanism};
use crate::verify::{run_suite, VerifyHooks};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "envylab", version, about = "Envy in random one-to-one matching markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo sweep over market sizes and mechanisms; writes aggregate CSV.
    Simulate(SimulateArgs),
    /// Closed-form expectations for one market size.
    Predict(PredictArgs),
    /// Exhaustive exact checks on tiny markets.
    Verify(VerifyArgs),
    /// Coupon collector: singleton types and stopping time.
    Coupon(CouponArgs),
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads [default: available parallelism].
    #[arg(long, env = "ENVYLAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Market sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,250,500,1000")]
    pub sizes: Vec<usize>,
    /// Replications per (size, mechanism).
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Mechanisms, comma separated: da, rsd, ttc.
    #[arg(long, value_delimiter = ',', default_value = "da")]
    pub mechanisms: Vec<Mechanism>,
    /// Metrics, comma separated: unenvied, envy_nobody, mean_rank, top_choice.
    #[arg(long, value_delimiter = ',', default_value = "unenvied,envy_nobody")]
    pub metrics: Vec<Metric>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Aggregate CSV output.
    #[arg(long, default_value = "envylab.csv")]
    pub out: PathBuf,
    /// Optional per-replication CSV output.
    #[arg(long)]
    pub per_replication: Option<PathBuf>,
    /// Proposal order for DA: fifo, lifo, random or random:<seed>.
    #[arg(long, default_value = "lifo")]
    pub queue: QueueDiscipline,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Market size.
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Largest market size to enumerate.
    #[arg(long, default_value_t = DEFAULT_MAX_PROFILE_N)]
    pub max_n: usize,
    /// Lift the enumeration size guard. The profile space grows as (n!)^(2n).
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct CouponArgs {
    /// Number of coupon types.
    #[arg(long)]
    pub n: usize,
    /// Independent runs.
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Optional CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_hooks(args, out, err, VerifyHooks::default())
}

pub fn run_with_hooks<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, hooks: VerifyHooks) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Verify(a) => cmd_verify(a, out, err, hooks),
        Command::Coupon(a) => cmd_coupon(a, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Usage(msg),
            Error::SizeGuard { .. } | Error::EmptyMarket => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(Error::Io(e))
    }
}

type CliResult = Result<i32, CliError>;

fn check_threads(t: &ThreadArgs) -> Result<(), CliError> {
    if t.threads == Some(0) {
        return Err(CliError::Usage("threads must be ≥ 1".into()));
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> CliResult {
    if a.sizes.contains(&0) {
        return Err(CliError::Usage("sizes must be ≥ 1".into()));
    }
    if a.reps == 0 {
        return Err(CliError::Usage("reps must be ≥ 1".into()));
    }
    check_threads(&a.threads)?;
    let config = ExperimentConfig {
        sizes: a.sizes,
        replications: a.reps,
        mechanisms: a.mechanisms,
        metrics: a.metrics,
        master_seed: a.seed,
        queue: a.queue,
        threads: a.threads.threads,
        output_path: Some(a.out.clone()),
        per_replication_path: a.per_replication,
        ..Default::default()
    };
    let output = run_experiment(&config)?;
    writeln!(
        out,
        "{:>6}  {:<4} {:<12} {:>12} {:>10}  {:>11}  {}",
        "n", "mech", "metric", "mean", "± se", "prediction", "kind"
    )?;
    for r in &output.records {
        writeln!(
            out,
            "{:>6}  {:<4} {:<12} {:>12} {:>10}  {:>11}  {}",
            r.n,
            r.mechanism.as_str(),
            r.metric.as_str(),
            format_float(r.mean),
            format_float(r.std_error),
            format_float(r.prediction),
            if r.prediction_exact { "exact" } else { "approx" }
        )?;
    }
    writeln!(out, "wrote {} records to {}", output.records.len(), a.out.display())?;
    Ok(EXIT_OK)
}

fn cmd_predict(a: PredictArgs, out: &mut dyn Write) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("n must be ≥ 1".into()));
    }
    let da = predict(a.n, Mechanism::Da)?;
    let rsd = predict(a.n, Mechanism::Rsd)?;
    let kind = |exact: bool| if exact { "exact" } else { "approx" };
    writeln!(out, "n = {}", a.n)?;
    writeln!(out, "{:<30} {:>22} {:>22}", "", "DA", "RSD / TTC")?;
    writeln!(
        out,
        "{:<30} {:>13.6} ({:<6}) {:>13.6} ({:<6})",
        "students whom nobody envies",
        da.unenvied_mean,
        kind(da.unenvied_exact),
        rsd.unenvied_mean,
        kind(rsd.unenvied_exact)
    )?;
    writeln!(
        out,
        "{:<30} {:>13.6} ({:<6}) {:>13.6} ({:<6})",
        "students who envy nobody",
        da.envy_nobody_mean,
        kind(da.envy_nobody_exact),
        rsd.envy_nobody_mean,
        kind(rsd.envy_nobody_exact)
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write, hooks: VerifyHooks) -> CliResult {
    if a.max_n == 0 {
        return Err(CliError::Usage("max-n must be ≥ 1".into()));
    }
    check_threads(&a.threads)?;
    let limit = if a.force {
        if a.max_n > DEFAULT_MAX_PROFILE_N {
            writeln!(
                err,
                "warning: enumerating (n!)^(2n) profiles for n up to {}; this may not finish",
                a.max_n
            )?;
        }
        a.max_n
    } else {
        DEFAULT_MAX_PROFILE_N
    };
    if a.max_n > limit {
        return Err(CliError::Usage(format!(
            "exhaustive enumeration limited to --max-n <= {limit} (got {}); pass --force to override",
            a.max_n
        )));
    }
    let checks = match a.threads.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Runtime(Error::Config(e.to_string())))?
            .install(|| run_suite(a.max_n, limit, hooks))?,
        None => run_suite(a.max_n, limit, hooks)?,
    };
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {} failed", checks.len(), failed)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_coupon(a: CouponArgs, out: &mut dyn Write) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("n must be ≥ 1".into()));
    }
    if a.reps == 0 {
        return Err(CliError::Usage("reps must be ≥ 1".into()));
    }
    check_threads(&a.threads)?;
    let s = coupon_experiment(a.n, a.reps, a.seed, a.threads.threads)?;
    let h = harmonic(a.n)?;
    let rows = [
        ("singletons", s.singletons.mean(), s.singletons.std_error(), "H_n", h),
        ("stopping_time", s.stopping_time.mean(), s.stopping_time.std_error(), "n*H_n", a.n as f64 * h),
    ];
    writeln!(out, "n = {}, reps = {}", a.n, a.reps)?;
    for (name, mean, se, rname, reference) in rows {
        writeln!(
            out,
            "{name:<14} {:>12} ± {:<10} {rname} = {}",
            format_float(mean),
            format_float(se),
            format_float(reference)
        )?;
    }
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.into()))?;
        let csv_err = |e: csv::Error| CliError::Runtime(e.into());
        w.write_record(["n", "metric", "mean", "std_error", "replications", "reference"]).map_err(csv_err)?;
        for (name, mean, se, _, reference) in rows {
            w.write_record([
                a.n.to_string(),
                name.to_string(),
                format_float(mean),
                format_float(se),
                a.reps.to_string(),
                format_float(reference),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(EXIT_OK)
}
