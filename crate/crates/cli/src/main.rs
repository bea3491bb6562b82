use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gridswitch_core::harness::{
    aggregate_runs, evaluate_policy, run_multi_seed, run_training, RunConfig,
};
use gridswitch_core::{Algorithm, HarnessError};
use log::info;

/// Train and evaluate transmission switching agents.
#[derive(Debug, Parser)]
#[command(name = "gridswitch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one agent per seed and write metrics and checkpoints.
    Train(TrainArgs),
    /// Greedy rollouts of a saved agent.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean and standard error across the runs in a directory.
    Aggregate {
        #[arg(long)]
        runs: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// MATPOWER case file.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algorithm>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// JSON document of configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-seed runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, e.g. `--set env.horizon=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

/// File values first, then `--set` overrides, then dedicated flags.
fn train_config(args: TrainArgs) -> Result<RunConfig, HarnessError> {
    let TrainArgs {
        case,
        algo,
        episodes,
        seeds,
        config,
        out,
        threads,
        overrides,
    } = args;
    let mut rc = match &config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for o in &overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{o}` is not KEY=VALUE")))?;
        rc.set_str(key.trim(), value.trim())?;
    }
    if let Some(case) = case {
        rc.case_path = case;
    }
    if let Some(algo) = algo {
        rc.algorithm = algo;
    }
    if let Some(n) = episodes {
        rc.episodes = n;
    }
    if let Some(seeds) = seeds {
        rc.seeds = seeds;
    }
    if let Some(out) = out {
        rc.out_dir = out;
    }
    if threads.is_some() {
        rc.threads = threads;
    }
    if rc.case_path.as_os_str().is_empty() {
        return Err(HarnessError::Config(
            "no case file given (use --case or the `case` key)".into(),
        ));
    }
    rc.validate()?;
    Ok(rc)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let rc = train_config(args)?;
            info!(
                "training {} on {} for {} episodes, seeds {:?}",
                rc.algorithm,
                rc.case_path.display(),
                rc.episodes,
                rc.seeds
            );
            if let [seed] = rc.seeds[..] {
                let out = run_training(&rc, seed).context("training failed")?;
                println!("{}", out.metrics_path.display());
                println!("{}", out.checkpoint_path.display());
            } else {
                let (outs, _) = run_multi_seed(&rc).context("training failed")?;
                for out in outs {
                    println!("{}", out.metrics_path.display());
                }
                println!(
                    "{}",
                    rc.out_dir
                        .join(format!("aggregate_{}_cumulative_reward.csv", rc.algorithm))
                        .display()
                );
            }
        }
        Command::Evaluate {
            checkpoint,
            case,
            episodes,
            seed,
        } => {
            let report = evaluate_policy(&checkpoint, &case, episodes, seed)
                .with_context(|| format!("evaluating {}", checkpoint.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Aggregate { runs } => {
            let groups =
                aggregate_runs(&runs).with_context(|| format!("aggregating {}", runs.display()))?;
            for (algo, series) in groups {
                let n = series.first().map_or(0, |s| s.n_seeds);
                println!("{algo}: {n} runs aggregated");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<HarnessError>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDSWITCH_LOG", "info"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
