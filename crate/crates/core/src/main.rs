use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use splitnet::harness::{self, ExperimentConfig, Variant, OUT_ENV};

#[derive(Parser)]
#[command(
    name = "splitnet",
    version,
    about = "Noisy-label experiments with a learnable clean/noisy splitter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// full | no_splitnet | no_warmup | no_hedging | fixed_threshold:T | plain_ce
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of a JSON grid over a base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, env = OUT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// Print metric deltas between two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Allowed drop before a metric counts as a regression.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Write the benchmark's train and test sets as CSV plus JSON sidecars.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            variant,
            seed,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let dir = cfg.resolve_out();
            let result = harness::run_experiment_to_dir(&cfg, &dir)?;
            let s = &result.summary;
            println!(
                "{} seed {}: best test acc {:.4}, last {:.4} -> {}",
                s.variant,
                s.seed,
                s.best_test_acc,
                s.last_test_acc,
                dir.display()
            );
        }
        Command::Sweep { config, grid, out } => {
            let cfg = load(&config)?;
            let grid: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&grid)?)?;
            for row in harness::sweep(&cfg, &grid, &out)? {
                println!(
                    "{:<48} best {:.4} last {:.4}",
                    row.point, row.best_test_acc, row.last_test_acc
                );
            }
        }
        Command::Compare { a, b, tol } => {
            let cmp = harness::compare_dirs(&a, &b, tol)?;
            for d in &cmp.deltas {
                println!("{:<24} {:>10.6} {:>10.6} {:>+10.6}", d.metric, d.a, d.b, d.delta);
            }
            if !cmp.regressions.is_empty() {
                eprintln!("regressions beyond {tol}: {}", cmp.regressions.join(", "));
                return Ok(ExitCode::from(1));
            }
        }
        Command::GenData { spec, out } => {
            let cfg = load(&spec)?;
            harness::generate_data(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
