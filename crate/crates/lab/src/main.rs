use std::path::PathBuf;
use std::process::ExitCode;

use beamlab::config::{output_root, ExperimentConfig};
use beamlab::error::EXIT_OTHER;
use beamlab::run::{self, CHECKPOINT, TEST_DIR, TRAIN_DIR};
use beamlab::verify::{audit_dataset, battery};
use beamlab::{LabError, Result};
use clap::{Parser, Subcommand};

/// Downlink beamforming experiments: data generation, training, evaluation
/// and sweeps.
///
/// Exit codes: 0 success, 1 I/O or file format error, 2 config error,
/// 3 solver failure, 4 shape mismatch, 5 missing checkpoint.
/// Relative output directories resolve against $BEAMLAB_OUTPUT_ROOT.
#[derive(Parser, Debug)]
#[command(name = "beamlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the training and test datasets of a config.
    GenData {
        config: PathBuf,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the networks the configured schemes need.
    Train {
        config: PathBuf,
        /// Training dataset directory (default: <out>/data/train).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint; epoch numbers continue after it.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Score the configured schemes on a test dataset.
    Eval {
        config: PathBuf,
        /// Checkpoint for learned schemes (default: <out>/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test dataset directory (default: <out>/data/test).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate, train and evaluate every point of the config's sweep.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sweep points run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Print a config with every default filled in (an example without a file).
    PrintConfig { config: Option<PathBuf> },
    /// Run the invariant battery, and audit datasets if given.
    Verify {
        #[arg(long)]
        dataset: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    match out {
        Some(p) if p.is_relative() => output_root().join(p),
        Some(p) => p,
        None => cfg.output_path(),
    }
}

fn execute(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::GenData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_dir(&cfg, out);
            let (train, test) = run::gen_data(&cfg, &out)?;
            println!("train: {} samples, hash {}", train.count, train.config_hash);
            println!("test: {} samples, hash {}", test.count, test.config_hash);
            println!("written to {}", out.display());
        }
        Cmd::Train {
            config,
            data,
            out,
            resume,
            quiet,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_dir(&cfg, out);
            let data = data.unwrap_or_else(|| out.join(TRAIN_DIR));
            let s = run::train(&cfg, &data, &out, resume.as_deref(), quiet)?;
            println!("trained {} networks to epoch {}", s.networks.len(), s.last_epoch);
        }
        Cmd::Eval {
            config,
            checkpoint,
            data,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_dir(&cfg, out);
            let checkpoint = checkpoint.unwrap_or_else(|| out.join(CHECKPOINT));
            let data = data.unwrap_or_else(|| out.join(TEST_DIR));
            let table = run::eval(&cfg, Some(&checkpoint), &data, &out)?;
            print!("{}", table.to_csv());
        }
        Cmd::Sweep {
            config,
            out,
            parallel,
            quiet,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out_dir(&cfg, out);
            let table = run::sweep(&cfg, &out, parallel, quiet)?;
            print!("{}", table.to_csv());
        }
        Cmd::PrintConfig { config } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::example(),
            };
            print!("{}", cfg.filled()?.to_toml());
        }
        Cmd::Verify { dataset, seed } => {
            let mut checks = battery(seed);
            for d in &dataset {
                checks.extend(audit_dataset(d));
            }
            for c in &checks {
                println!("{}", c.line());
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_OTHER as u8),
        Err(e) => {
            eprintln!("error: {e}");
            report_source(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report_source(e: &LabError) {
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}
