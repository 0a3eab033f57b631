use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isi_gnn::parallel::{init_thread_pool, ExecMode};
use isi_lab::config::KEYS;
use isi_lab::{CliError, ExperimentConfig, RawConfig, Result, RunContext};

/// Thread-count environment variable; `1` also selects the sequential,
/// reproducible mode.
const THREADS_ENV: &str = "ISI_LAB_THREADS";

#[derive(Parser)]
#[command(name = "isi-lab", version = isi_lab::output::VERSION, about = "GNN and classical ISI detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER/BLER/BMI sweep over the configured noise grid.
    Simulate(Common),
    /// Train a GNN and write its log and checkpoint.
    Train(Common),
    /// EXIT curves and turbo trajectories.
    Exit(Common),
    /// Cycle counts paired with measured BER.
    Latency(Common),
    /// Check a configuration without running it.
    ValidateConfig(Common),
    /// List every configuration key.
    Keys,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    config: PathBuf,
    /// Override a key, e.g. `--set train.epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Main CSV output (overrides `output.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to resume training from (overrides `train.resume`).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Use the published training budget.
    #[arg(long)]
    paper_budget: bool,
    /// Write zero wall times so reruns are byte-identical.
    #[arg(long)]
    reproducible: bool,
}

fn absolute(p: &std::path::Path) -> Result<String> {
    Ok(std::path::absolute(p)?.display().to_string())
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::load(&common.config)?;
    for s in &common.set {
        raw.set(s)?;
    }
    if let Some(out) = &common.out {
        raw.insert("output.csv", &absolute(out)?)?;
    }
    if let Some(r) = &common.resume {
        raw.insert("train.resume", &absolute(r)?)?;
    }
    ExperimentConfig::resolve(&raw, common.paper_budget)
}

fn context(common: &Common) -> Result<RunContext> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = threads {
        init_thread_pool(n);
    }
    let single = threads == Some(1);
    Ok(RunContext {
        mode: if single { ExecMode::Sequential } else { ExecMode::Parallel },
        reproducible: single || common.reproducible,
    })
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Keys => {
            for (k, doc) in KEYS {
                println!("{k:28} {doc}");
            }
            return Ok(());
        }
        Command::Simulate(c)
        | Command::Train(c)
        | Command::Exit(c)
        | Command::Latency(c)
        | Command::ValidateConfig(c) => c,
    };
    let cfg = load(common)?;
    let ctx = context(common)?;
    match cli.command {
        Command::Simulate(_) => isi_lab::simulate::run_simulate(&cfg, ctx),
        Command::Train(_) => isi_lab::train::run_train(&cfg, ctx),
        Command::Exit(_) => isi_lab::exit::run_exit(&cfg, ctx),
        Command::Latency(_) => isi_lab::simulate::run_latency(&cfg, ctx),
        Command::ValidateConfig(_) => {
            println!("ok config={} points={} block_len={}", cfg.hash, cfg.sweep.len(), cfg.block_len);
            Ok(())
        }
        Command::Keys => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isi-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
