//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 runtime error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{self, Metrics, OptimizeOptions, SearchSpace};
use crate::config::parse_number;
use crate::error::Error;
use crate::params::Config;
use crate::sim::{self, Mode};
use crate::trace::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Ladder size used by `run --oracle`.
pub const ORACLE_SEGMENTS: usize = 200;

pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Debug, Parser)]
#[command(name = "reflectwave", version, about = "Reflected-wave overvoltage simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and write its trace and metrics.
    Run(RunArgs),
    /// Run the Cartesian product of parameter ranges.
    Sweep(SweepArgs),
    /// Search reference-model parameters for the lowest branch loss.
    Optimize(OptimizeArgs),
    /// Recompute metrics from a trace CSV.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file; defaults apply to anything it leaves out.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// adaptive, static-matched or off.
    #[arg(long, default_value = "adaptive", value_parser = parse_mode)]
    pub mode: Mode,
    /// Seeds the optimizer restarts. Simulations themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Also run the ladder cable and report the divergence.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// KEY=START:STOP:STEPS or KEY=V1,V2,...
    #[arg(long = "sweep", value_name = "SPEC", required = true)]
    pub sweeps: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Maximum number of simulations.
    #[arg(long, default_value_t = 60)]
    pub budget: usize,
    /// Random restarts after the configured starting point.
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
    /// Overshoot limit on peak_ratio.
    #[arg(long, default_value_t = 1.25)]
    pub peak_limit: f64,
    /// NAME=LO:HI for alpha, omega or gamma. Unset ranges span a factor of
    /// four either side of the configured value.
    #[arg(long = "range", value_name = "SPEC")]
    pub ranges: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Trace CSV.
    pub trace: PathBuf,
    /// Config used for the run; defaults to `config.resolved` beside the trace.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for metrics.txt; stdout only when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

/// A failed command, sorted by exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("output directory {}: {e}", dir.display())))
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        None => Ok(Config::default()),
        Some(p) => Config::from_file(p).map_err(|e| match e {
            Error::Io(io) => Failure::Input(format!("{}: {io}", p.display())),
            other => Failure::Input(format!("{}: {other}", p.display())),
        }),
    }
}

fn validated(config: &Config) -> Result<(), Failure> {
    config.validate().map(|_| ()).map_err(Failure::from)
}

fn resolved(config: &Config, mode: Mode, seed: u64) -> String {
    format!("# mode = {mode}\n# seed = {seed}\n{}", config.to_config_string())
}

pub fn cmd_run(args: &RunArgs) -> Outcome {
    let c = &args.common;
    let config = load_config(c.config.as_deref())?;
    validated(&config)?;
    out_dir(&c.out)?;
    write(&c.out.join(RESOLVED_CONFIG), &resolved(&config, c.mode, c.seed))?;
    let trace = sim::run_to_end(&config, c.mode)?;
    let m = analysis::metrics(&trace, &config);
    trace
        .write(&c.out.join("trace.csv"))
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    write(&c.out.join("metrics.txt"), &m.to_text())?;
    write(&c.out.join("metrics.json"), &m.to_json())?;
    print!("{}", m.to_text());
    if args.oracle {
        let ladder = sim::run_ladder(&config, c.mode, ORACLE_SEGMENTS)?;
        ladder
            .write(&c.out.join("trace_ladder.csv"))
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        let horizon = 10.0 * config.cable.delay();
        let div = sim::max_divergence(&trace, &ladder, horizon);
        let report = format!(
            "segments = {ORACLE_SEGMENTS}\nhorizon_s = {horizon:?}\nmax_divergence_V = {div:?}\nmax_divergence_vdc = {:?}\n",
            div / config.pwm.v_dc
        );
        write(&c.out.join("oracle.txt"), &report)?;
        print!("{report}");
    }
    Ok(())
}

/// One swept key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

/// `KEY=START:STOP:STEPS` gives `STEPS` evenly spaced values including
/// both ends; `KEY=V1,V2,...` lists them.
pub fn parse_sweep(spec: &str) -> Result<SweepAxis, String> {
    let (key, range) = spec
        .split_once('=')
        .ok_or_else(|| format!("sweep `{spec}`: expected KEY=START:STOP:STEPS"))?;
    let key = key.trim().to_string();
    if Config::default().get(&key).is_none() {
        return Err(format!("sweep `{spec}`: unknown key `{key}`"));
    }
    let num =
        |s: &str| parse_number(s.trim()).ok_or_else(|| format!("sweep `{spec}`: `{s}` is not a number"));
    let parts: Vec<&str> = range.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, steps] => {
            let (a, b) = (num(start)?, num(stop)?);
            let n: usize = steps
                .trim()
                .parse()
                .map_err(|_| format!("sweep `{spec}`: step count `{steps}` is not a whole number"))?;
            match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
            }
        }
        [list] => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<Result<_, _>>()?,
        _ => return Err(format!("sweep `{spec}`: expected KEY=START:STOP:STEPS")),
    };
    if values.is_empty() {
        return Err(format!("sweep `{spec}`: empty range"));
    }
    Ok(SweepAxis { key, values })
}

/// Every combination, last axis fastest.
pub fn cartesian(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn sweep_point(base: &Config, axes: &[SweepAxis], point: &[f64], mode: Mode) -> Result<Metrics, String> {
    let mut c = *base;
    for (axis, v) in axes.iter().zip(point) {
        c.set(&axis.key, &format!("{v:?}"))?;
    }
    let trace = sim::run_to_end(&c, mode).map_err(|e| e.to_string())?;
    Ok(analysis::metrics(&trace, &c))
}

/// The sweep table as CSV text. Failed points carry their message in the
/// `error` column and empty metric cells.
pub fn sweep_table(base: &Config, axes: &[SweepAxis], mode: Mode) -> String {
    let points = cartesian(axes);
    let rows: Vec<Result<Metrics, String>> = points
        .par_iter()
        .map(|p| sweep_point(base, axes, p, mode))
        .collect();
    let mut s = String::new();
    for a in axes {
        s.push_str(&a.key);
        s.push(',');
    }
    s.push_str("peak_ratio,ring_freq_hz,branch_loss_w,settle_time_s,clamp_count,error\n");
    for (p, r) in points.iter().zip(rows) {
        for v in p {
            let _ = write!(s, "{v:?},");
        }
        match r {
            Ok(m) => {
                let ring = m.ring_freq_hz.map(|f| format!("{f:?}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{:?},{ring},{:?},{:?},{},",
                    m.peak_ratio, m.branch_loss_w, m.settle_time_s, m.clamp_count
                );
            }
            Err(e) => {
                let _ = writeln!(s, ",,,,,{}", e.replace([',', '\n', '\r'], " "));
            }
        }
    }
    s
}

pub fn cmd_sweep(args: &SweepArgs) -> Outcome {
    let c = &args.common;
    let config = load_config(c.config.as_deref())?;
    let axes: Vec<SweepAxis> = args
        .sweeps
        .iter()
        .map(|s| parse_sweep(s))
        .collect::<Result<_, _>>()
        .map_err(Failure::Input)?;
    out_dir(&c.out)?;
    write(&c.out.join(RESOLVED_CONFIG), &resolved(&config, c.mode, c.seed))?;
    let table = analysis::with_pool(0, || sweep_table(&config, &axes, c.mode))?;
    write(&c.out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn parse_range(spec: &str) -> Result<(String, (f64, f64)), String> {
    let (name, r) = spec
        .split_once('=')
        .ok_or_else(|| format!("range `{spec}`: expected NAME=LO:HI"))?;
    let (lo, hi) = r
        .split_once(':')
        .ok_or_else(|| format!("range `{spec}`: expected NAME=LO:HI"))?;
    let num =
        |s: &str| parse_number(s.trim()).ok_or_else(|| format!("range `{spec}`: `{s}` is not a number"));
    Ok((name.trim().to_string(), (num(lo)?, num(hi)?)))
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Outcome {
    let c = &args.common;
    let config = load_config(c.config.as_deref())?;
    validated(&config)?;
    let mut space = SearchSpace::around(&config, 4.0);
    for spec in &args.ranges {
        let (name, r) = parse_range(spec).map_err(Failure::Input)?;
        match name.as_str() {
            "alpha" => space.alpha = r,
            "omega" => space.omega = r,
            "gamma" => space.gamma = r,
            _ => {
                return Err(Failure::Input(format!(
                    "range `{spec}`: expected alpha, omega or gamma"
                )))
            }
        }
    }
    let opts = OptimizeOptions {
        seed: c.seed,
        budget: args.budget,
        restarts: args.restarts,
        peak_limit: args.peak_limit,
        mode: c.mode,
        threads: 0,
    };
    out_dir(&c.out)?;
    write(&c.out.join(RESOLVED_CONFIG), &resolved(&config, c.mode, c.seed))?;
    let result = analysis::optimize_refmodel(&config, &space, &opts)?;
    write(&c.out.join("optimize_log.csv"), &result.log_csv())?;
    let mut report = format!("evaluations = {}\n", result.log.len());
    let (status, pick) = match (&result.best, &result.best_infeasible) {
        (Some(b), _) => ("feasible", Some(b)),
        (None, b) => ("infeasible", b.as_ref()),
    };
    let _ = writeln!(report, "status = {status}");
    if let Some(e) = pick {
        let _ = writeln!(
            report,
            "alpha = {:?}\nomega = {:?}\ngamma = {:?}",
            e.alpha, e.omega, e.gamma
        );
        if let Some(m) = e.metrics {
            report.push_str(&m.to_text());
        }
        let mut best = config;
        best.mrac.alpha = e.alpha;
        best.mrac.omega = e.omega;
        best.mrac.gamma = e.gamma;
        write(&c.out.join("best.config"), &resolved(&best, c.mode, c.seed))?;
    }
    write(&c.out.join("optimize.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn cmd_metrics(args: &MetricsArgs) -> Outcome {
    let trace = Trace::read(&args.trace).map_err(|e| match e {
        Error::Io(io) => Failure::Input(format!("{}: {io}", args.trace.display())),
        other => Failure::Input(format!("{}: {other}", args.trace.display())),
    })?;
    let beside = args.trace.parent().map(|d| d.join(RESOLVED_CONFIG));
    let path = match (&args.config, beside) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(b)) if b.exists() => Some(b),
        _ => None,
    };
    let config = load_config(path.as_deref())?;
    let m = analysis::metrics(&trace, &config);
    if let Some(dir) = &args.out {
        out_dir(dir)?;
        write(&dir.join("metrics.txt"), &m.to_text())?;
    }
    print!("{}", m.to_text());
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
            }
            f.code()
        }
    }
}

pub fn main() -> i32 {
    run_with(std::env::args_os())
}
