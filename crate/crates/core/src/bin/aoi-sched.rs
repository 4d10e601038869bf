use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use aoi_sched::harness::config::ExperimentConfig;
use aoi_sched::harness::emit::{emit_curves, load_sweeps, write_sweep};
use aoi_sched::harness::simulate::simulate;
use aoi_sched::harness::sweep::{omega_grid, run_sweep_with};
use aoi_sched::harness::train::{evaluate, run_training, write_eval};
use aoi_sched::par::Execution;
use aoi_sched::policies::PolicyKind;
use aoi_sched::rl::Checkpoint;
use aoi_sched::{Error, Result};

#[derive(Parser)]
#[command(name = "aoi-sched", version, about = "AoI-aware camera scheduling simulator and PPO trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Threshold,
    Wait,
    Embedding,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Threshold => PolicyKind::Threshold,
            PolicyArg::Wait => PolicyKind::Wait,
            PolicyArg::Embedding => PolicyKind::Embedding,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one fixed-ω simulation and write trace.csv and decisions.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to policy.omega.
        #[arg(long)]
        omega: Option<u64>,
        /// Defaults to harness.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep ω over a grid and write curves plus a summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        omega_min: u64,
        #[arg(long, default_value_t = 120)]
        omega_max: u64,
        #[arg(long, default_value_t = 1)]
        step: u64,
        /// Defaults to harness.replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Defaults to policy.kind.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the PPO scheduler, then evaluate it on held-out worlds.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved checkpoint on held-out worlds.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn saved sweep results into curve CSVs and summary.json.
    EmitCurves {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.harness.output_dir.clone())
}

fn policy(cfg: &ExperimentConfig, p: Option<PolicyArg>) -> PolicyKind {
    p.map_or(cfg.policy.kind, Into::into)
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, omega, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let rows = simulate(&cfg, omega.unwrap_or(cfg.policy.omega), &dir)?;
            info!("{} decisions", rows.len());
            show(&[dir.join("trace.csv"), dir.join("decisions.csv")]);
        }
        Command::Sweep {
            config,
            omega_min,
            omega_max,
            step,
            reps,
            policy: p,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = reps {
                cfg.harness.replications = r;
            }
            let grid = omega_grid(omega_min, omega_max, step)?;
            let exec = if cfg.harness.parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            };
            let kind = policy(&cfg, p);
            info!("sweeping {} ω values × {} replications", grid.len(), cfg.harness.replications);
            let result = run_sweep_with(&cfg, kind, &grid, exec)?;
            let dir = out_dir(&cfg, out);
            let mut written = vec![write_sweep(&result, &dir)?];
            written.extend(emit_curves(&[result], &dir)?);
            show(&written);
        }
        Command::Train { config, policy: p, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kind = policy(&cfg, p);
            let dir = out_dir(&cfg, out);
            let report = run_training(&cfg, kind, Some(&dir))?;
            info!(
                "eval mean reward {:.4} over {} episodes",
                report.eval.mean_reward, report.eval.episodes
            );
            let name = kind.name();
            show(&[
                dir.join(format!("rewards_{name}.csv")),
                dir.join(format!("checkpoint_{name}.json")),
                dir.join(format!("eval_{name}.json")),
            ]);
        }
        Command::Eval {
            config,
            checkpoint,
            policy: p,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kind = policy(&cfg, p);
            let ck = Checkpoint::load(&checkpoint)?;
            if ck.omega_max as u64 != cfg.policy.omega_max {
                return Err(Error::Config(format!(
                    "checkpoint omega_max {} does not match config {}",
                    ck.omega_max, cfg.policy.omega_max
                )));
            }
            let report = evaluate(&cfg, kind, &ck.to_net()?)?;
            let dir = out_dir(&cfg, out);
            show(&[write_eval(&report, &dir)?]);
        }
        Command::EmitCurves { input, out } => {
            let results = load_sweeps(&input)?;
            show(&emit_curves(&results, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aoi-sched: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
