//! Command-line driver: simulate, filter and reproduce the two studies.

pub mod reproduce;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use mspf::config::ConfigFile;
use mspf::eval::{self, EvalReport};
use mspf::io;
use mspf::presets::Study;
use mspf::{run_filter, simulate, DegeneratePolicy, FilterConfig};
use thiserror::Error;

pub use reproduce::{Band, ReproduceOptions, SeedRun, StudyOutcome};

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "MSPF_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mspf::Error),
    #[error("{0}")]
    Usage(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    /// 1 for I/O, 2 for configuration and data shape, 3 for aborted filters.
    pub fn exit_code(&self) -> u8 {
        use mspf::Error as E;
        match self {
            CliError::Core(E::Io { .. } | E::Csv { .. }) => 1,
            CliError::Core(E::DegenerateWeights { .. }) => 3,
            CliError::Core(_) | CliError::Usage(_) | CliError::Threads(_) => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit status when a reproduction misses one of its acceptance bands.
pub const BAND_FAILURE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "mspf", version, about = "Multiscale switching state-space models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate ground truth and measurements from a config.
    Simulate(SimulateArgs),
    /// Run the particle filter on simulated or recorded measurements.
    Filter(FilterArgs),
    /// Simulate, filter and evaluate one of the shipped studies over several seeds.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the config's noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Abort,
    Uniform,
}

impl From<PolicyArg> for DegeneratePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Abort => DegeneratePolicy::Abort,
            PolicyArg::Uniform => DegeneratePolicy::Uniform,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FilterOptions {
    #[arg(long, default_value_t = mspf::presets::STUDY_PARTICLES)]
    pub particles: usize,
    /// Store every particle's coarse state, weight and regime per step.
    #[arg(long)]
    pub snapshot: bool,
    #[arg(long, default_value_t = eval::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Uniform)]
    pub degenerate_policy: PolicyArg,
}

impl FilterOptions {
    pub fn filter_config(&self, seed: u64) -> FilterConfig {
        let mut f = FilterConfig::new(self.particles, seed);
        f.store_snapshots = self.snapshot;
        f.degenerate_policy = self.degenerate_policy.into();
        f
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory written by `simulate`; ground truth there is evaluated if present.
    #[arg(long)]
    pub measurements: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Filter seed; defaults to the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub filter: FilterOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyArg {
    Sim1,
    Sim2,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::Sim1 => Study::Sim1,
            StudyArg::Sim2 => Study::Sim2,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub study: StudyArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// First seed; defaults to the config seed.
    #[arg(long)]
    pub seed_base: Option<u64>,
    /// Replaces the shipped study config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterOptions,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    BandsFailed,
}

pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| Status::Ok),
        Command::Filter(a) => cmd_filter(a).map(|_| Status::Ok),
        Command::Reproduce(a) => cmd_reproduce(a),
    }
}

/// Builds the global rayon pool, capped by `MSPF_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Threads(e.to_string()))
}

fn load_file(path: &Path, seed: Option<u64>) -> Result<ConfigFile> {
    let mut file = ConfigFile::load(path)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    Ok(file)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let resolved = load_file(&a.config, a.seed)?.resolve()?;
    let schedule = resolved
        .schedule
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no regime schedule to simulate".into()))?;
    let truth = simulate(&resolved.config, schedule)?;
    io::write_ground_truth(&a.out, &truth)?;
    io::write_run_metadata(&a.out, &resolved)?;
    info!("wrote ground truth to {}", a.out.display());
    Ok(())
}

pub fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let resolved = load_file(&a.config, None)?.resolve()?;
    let cfg = &resolved.config;
    let measurements = io::read_measurements(&a.measurements, cfg)?;
    let fcfg = a.filter.filter_config(a.seed.unwrap_or(cfg.seed));
    let out = run_filter(cfg, &fcfg, &measurements)?;
    io::write_filter_output(&a.out, &out)?;
    if a.measurements.join(io::INDICATORS_FILE).exists() {
        let truth = io::read_ground_truth(&a.measurements, cfg)?;
        let report = EvalReport::compute(&truth, &out, a.filter.burn_in)?;
        eval::emit_report(&report, &a.out.join("report"))?;
        io::write_plot_table(&a.out.join("plot.csv"), &truth, &out)?;
        print!("{}", eval::summary_text(&report));
    }
    Ok(())
}

pub fn cmd_reproduce(a: &ReproduceArgs) -> Result<Status> {
    let study: Study = a.study.into();
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => study.file()?,
    };
    let opts = ReproduceOptions {
        seeds: a.seeds,
        seed_base: a.seed_base.unwrap_or(file.seed),
        filter: a.filter.clone(),
        audit_conjugacy: true,
    };
    if opts.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let outcome = reproduce::run_study(study, &file, &opts, Some(&a.out))?;
    let text = outcome.band_text();
    print!("{text}");
    let path = a.out.join("acceptance.txt");
    fs::write(&path, &text).map_err(|e| mspf::Error::Io { path, source: e })?;
    Ok(if outcome.passed() { Status::Ok } else { Status::BandsFailed })
}
