//! `dualsim`: command-line front end for the two-level scheduling simulator.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "dualsim",
    version,
    about = "Two-level (batch + in-job) scheduling simulator"
)]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, env = "DUALSIM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut the busiest window out of an SWF log.
    ExtractWindow(ExtractArgs),
    /// Run one batch/loop policy pair and write metrics and traces.
    Simulate(ExperimentArgs),
    /// Run every (bls, als, upsilon) combination and write one CSV.
    Sweep(SweepArgs),
    /// Time the simulator over a ladder of job counts.
    Bench(BenchArgs),
    /// Write a synthetic SWF workload.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 24.0)]
    hours: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags mirroring the config file keys; they override `--config`.
#[derive(Debug, Args, Default)]
struct ExperimentArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in workload (`scenario42`).
    #[arg(long)]
    fixture: Option<String>,
    /// SWF workload; a synthetic one is generated when absent.
    #[arg(long = "in")]
    input: Option<String>,
    /// Simulate only the busiest window of this many hours.
    #[arg(long)]
    hours: Option<String>,
    /// Number of usable jobs to keep (or generate).
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    hosts: Option<String>,
    #[arg(long)]
    cores_per_host: Option<String>,
    /// GFLOP/s per host.
    #[arg(long)]
    host_peak: Option<String>,
    #[arg(long)]
    link_gbps: Option<String>,
    #[arg(long)]
    link_latency: Option<String>,
    /// Comma-separated: fcfs, edf, sjf.
    #[arg(long)]
    bls: Option<String>,
    /// Comma-separated: static, ss, gss, fac.
    #[arg(long)]
    als: Option<String>,
    /// Comma-separated task variation factors in [0, 1).
    #[arg(long)]
    upsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Seconds added to every chunk.
    #[arg(long)]
    overhead: Option<String>,
    /// EDF deadline = arrival + factor * requested runtime.
    #[arg(long)]
    edf_factor: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Add a makespan ratio column against each pair's upsilon = 0 row.
    #[arg(long)]
    ratio: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated job counts.
    #[arg(long, default_value = "10,100,1000,10000", value_delimiter = ',')]
    ladder: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    jobs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean seconds between arrivals.
    #[arg(long, default_value_t = 60.0)]
    interarrival: f64,
    /// Median run time in seconds.
    #[arg(long, default_value_t = 600.0)]
    runtime_median: f64,
    /// Log-normal sigma of run times.
    #[arg(long, default_value_t = 1.0)]
    runtime_sigma: f64,
    /// Largest power-of-two core request.
    #[arg(long, default_value_t = 64)]
    max_cores: u32,
    #[arg(long)]
    out: PathBuf,
}

impl ExperimentArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("fixture", &self.fixture),
            ("workload_path", &self.input),
            ("window_hours", &self.hours),
            ("jobs", &self.jobs),
            ("hosts", &self.hosts),
            ("cores_per_host", &self.cores_per_host),
            ("host_peak_gflops", &self.host_peak),
            ("link_gbps", &self.link_gbps),
            ("link_latency_s", &self.link_latency),
            ("bls", &self.bls),
            ("als", &self.als),
            ("upsilon", &self.upsilon),
            ("seed", &self.seed),
            ("chunk_overhead_s", &self.overhead),
            ("edf_deadline_factor", &self.edf_factor),
            ("output_dir", &self.out_dir),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }

    /// Layers the config file and flags over `base`.
    fn resolve(&self, mut base: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            base.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            base.set(key, value)?;
        }
        base.validate()?;
        Ok(base)
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config(
                "DUALSIM_THREADS must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::ExtractWindow(a) => commands::extract_window(&a.input, a.hours, &a.out),
        Command::Simulate(a) => {
            commands::simulate(&a.resolve(commands::single_run_defaults())?, cli.threads)
        }
        Command::Sweep(a) => commands::sweep(
            &a.exp.resolve(ExperimentConfig::default())?,
            a.ratio,
            cli.threads,
        ),
        Command::Bench(a) => commands::bench(
            &a.exp.resolve(commands::bench_defaults())?,
            &a.ladder,
            a.reps,
        ),
        Command::GenSynthetic(a) => commands::gen_synthetic(
            &dualsim_core::synthetic::SyntheticConfig {
                jobs: a.jobs,
                mean_interarrival_s: a.interarrival,
                runtime_median_s: a.runtime_median,
                runtime_sigma: a.runtime_sigma,
                max_cores: a.max_cores,
                seed: a.seed,
            },
            &a.out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dualsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
