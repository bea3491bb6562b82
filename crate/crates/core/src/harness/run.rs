use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{split_seed, RunConfig, SeedStream};
use super::metrics::{
    aggregate, read_metrics, write_aggregate, write_metrics, AggregateSeries, EpisodeMetrics,
};
use super::HarnessError;
use crate::agent::ddqn::{DdqnAgent, DdqnConfig};
use crate::agent::ddsac::{DdsacAgent, DdsacConfig};
use crate::agent::ppo::{PpoAgent, PpoConfig};
use crate::agent::{evaluate_episode, random_episode, Agent, Algorithm, EpisodeOutcome};
use crate::case::{parse_case, validate, GridCase};
use crate::env::{EnvConfig, GridEnv};
use crate::nn::{Checkpoint, CheckpointError};

/// Files written by one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub metrics: Vec<EpisodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub algorithm: String,
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_generator_cost: f64,
    pub mean_voltage_violation: f64,
    pub mean_power_loss: f64,
    pub mean_line_overload: f64,
    pub mean_open_lines: f64,
    pub mean_penalties: f64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn checkpoint_err(path: &Path, e: CheckpointError) -> HarnessError {
    match e {
        CheckpointError::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::CheckpointMismatch(format!("{}: {other}", path.display())),
    }
}

/// Reads, parses and validates a case file.
pub fn load_case_file(path: &Path) -> Result<GridCase, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::CaseLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let case = parse_case(&text).map_err(|source| HarnessError::CaseParse {
        path: path.to_path_buf(),
        source,
    })?;
    let issues = validate(&case);
    if !issues.is_empty() {
        return Err(HarnessError::CaseLoad {
            path: path.to_path_buf(),
            reason: format!("validation failed: {issues:?}"),
        });
    }
    Ok(case)
}

/// Fresh agent of the configured kind, seeded from the run seed.
pub fn build_agent(
    config: &RunConfig,
    seed: u64,
    obs_dim: usize,
    action_dim: usize,
) -> Result<Box<dyn Agent + Send>, HarnessError> {
    let agent_seed = split_seed(seed, SeedStream::Agent);
    Ok(match config.algorithm {
        Algorithm::Ddsac => Box::new(DdsacAgent::new(
            obs_dim,
            action_dim,
            DdsacConfig {
                seed: agent_seed,
                ..config.ddsac.clone()
            },
        )?),
        Algorithm::Ddqn => Box::new(DdqnAgent::new(
            obs_dim,
            action_dim,
            DdqnConfig {
                seed: agent_seed,
                ..config.ddqn.clone()
            },
        )?),
        Algorithm::Ppo => Box::new(PpoAgent::new(
            obs_dim,
            action_dim,
            PpoConfig {
                seed: agent_seed,
                ..config.ppo.clone()
            },
        )?),
    })
}

/// Restores whichever agent a checkpoint holds, checked against the
/// expected dimensions.
pub fn load_agent(
    ckpt: &Checkpoint,
    obs_dim: usize,
    action_dim: usize,
) -> Result<Box<dyn Agent + Send>, HarnessError> {
    let algo: Algorithm = ckpt
        .meta("algo")
        .unwrap_or("")
        .parse()
        .map_err(HarnessError::CheckpointMismatch)?;
    let (o, a) = (Some(obs_dim), Some(action_dim));
    Ok(match algo {
        Algorithm::Ddsac => Box::new(DdsacAgent::from_checkpoint(ckpt, o, a)?),
        Algorithm::Ddqn => Box::new(DdqnAgent::from_checkpoint(ckpt, o, a)?),
        Algorithm::Ppo => Box::new(PpoAgent::from_checkpoint(ckpt, o, a)?),
    })
}

fn run_name(algo: Algorithm, seed: u64) -> String {
    format!("{algo}_seed{seed}")
}

fn train_on_case(
    config: &RunConfig,
    case: Arc<GridCase>,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    let env_config = config.env_for_seed(seed);
    let mut env =
        GridEnv::new(case, env_config.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut agent = build_agent(config, seed, env.observation_len(), env.action_space_size())?;
    let mut metrics = Vec::with_capacity(config.episodes);
    let report_every = (config.episodes / 10).max(1);
    for episode in 0..config.episodes {
        let outcome = agent.train_episode(&mut env)?;
        let row = EpisodeMetrics::from_outcome(episode, &outcome);
        debug!(
            "{} episode {episode}: {row:?}",
            run_name(config.algorithm, seed)
        );
        if (episode + 1) % report_every == 0 {
            info!(
                "{} episode {}/{}: reward {:.3}",
                run_name(config.algorithm, seed),
                episode + 1,
                config.episodes,
                row.cumulative_reward
            );
        }
        metrics.push(row);
    }

    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let name = run_name(config.algorithm, seed);
    let metrics_path = config.out_dir.join(format!("{name}.csv"));
    let checkpoint_path = config.out_dir.join(format!("{name}.ckpt"));
    write_metrics(&metrics_path, &metrics)?;
    let mut ckpt = agent.to_checkpoint();
    ckpt.set_meta("seed", seed.to_string());
    ckpt.set_meta(
        "env_config",
        serde_json::to_string(&env_config).expect("config serializes"),
    );
    ckpt.save(&checkpoint_path)
        .map_err(|e| checkpoint_err(&checkpoint_path, e))?;
    Ok(RunOutput {
        seed,
        metrics_path,
        checkpoint_path,
        metrics,
    })
}

/// Trains one seed and writes `<algo>_seed<seed>.csv` and `.ckpt` into
/// the output directory.
pub fn run_training(config: &RunConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let case = Arc::new(load_case_file(&config.case_path)?);
    train_on_case(config, case, seed)
}

/// Trains every seed on worker threads, then writes one aggregate file per
/// metric, `aggregate_<algo>_<metric>.csv`.
pub fn run_multi_seed(
    config: &RunConfig,
) -> Result<(Vec<RunOutput>, Vec<AggregateSeries>), HarnessError> {
    config.validate()?;
    if config.seeds.len() < 2 {
        return Err(HarnessError::Config(
            "multi-seed runs need at least two seeds".into(),
        ));
    }
    let case = Arc::new(load_case_file(&config.case_path)?);
    let workers = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(config.seeds.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput, HarnessError>>>> =
        Mutex::new((0..config.seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = config.seeds.get(i) else {
                    break;
                };
                let out = train_on_case(config, Arc::clone(&case), seed);
                results.lock().expect("result lock")[i] = Some(out);
            });
        }
    });
    let mut outputs = Vec::with_capacity(config.seeds.len());
    for (seed, r) in config
        .seeds
        .iter()
        .zip(results.into_inner().expect("result lock"))
    {
        match r.expect("every seed ran") {
            Ok(out) => outputs.push(out),
            Err(e) => {
                return Err(HarnessError::Run {
                    seed: *seed,
                    source: Box::new(e),
                })
            }
        }
    }
    let runs: Vec<Vec<EpisodeMetrics>> = outputs.iter().map(|o| o.metrics.clone()).collect();
    let series = aggregate(&runs)?;
    for s in &series {
        let path = config
            .out_dir
            .join(format!("aggregate_{}_{}.csv", config.algorithm, s.metric));
        write_aggregate(&path, s)?;
    }
    Ok((outputs, series))
}

fn parse_run_file(name: &str) -> Option<(Algorithm, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (algo, seed) = stem.split_once("_seed")?;
    Some((algo.parse().ok()?, seed.parse().ok()?))
}

/// Aggregates every `<algo>_seed<seed>.csv` in `dir`, grouped by
/// algorithm, and writes the aggregate files next to them.
pub fn aggregate_runs(dir: &Path) -> Result<Vec<(Algorithm, Vec<AggregateSeries>)>, HarnessError> {
    type Group = (Algorithm, Vec<(u64, PathBuf)>);
    let mut groups: BTreeMap<&'static str, Group> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((algo, seed)) = parse_run_file(&name) {
            groups
                .entry(algo.name())
                .or_insert_with(|| (algo, Vec::new()))
                .1
                .push((seed, entry.path()));
        }
    }
    if groups.is_empty() {
        return Err(HarnessError::Config(format!(
            "no <algo>_seed<N>.csv files in {}",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for (_, (algo, mut files)) in groups {
        files.sort();
        let runs = files
            .iter()
            .map(|(_, p)| read_metrics(p))
            .collect::<Result<Vec<_>, _>>()?;
        let series = aggregate(&runs)?;
        for s in &series {
            write_aggregate(&dir.join(format!("aggregate_{algo}_{}.csv", s.metric)), s)?;
        }
        info!("aggregated {} {algo} runs", files.len());
        out.push((algo, series));
    }
    Ok(out)
}

fn mean_report(algorithm: &str, outcomes: &[EpisodeOutcome]) -> EvaluationReport {
    let n = outcomes.len().max(1) as f64;
    let mean = |f: &dyn Fn(&EpisodeOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    EvaluationReport {
        algorithm: algorithm.to_string(),
        episodes: outcomes.len(),
        mean_reward: mean(&|o| o.cumulative_reward),
        mean_generator_cost: mean(&|o| o.generator_cost),
        mean_voltage_violation: mean(&|o| o.voltage_violation),
        mean_power_loss: mean(&|o| o.power_loss),
        mean_line_overload: mean(&|o| o.line_overload),
        mean_open_lines: mean(&|o| o.open_lines as f64),
        mean_penalties: mean(&|o| o.penalties as f64),
    }
}

/// Greedy rollouts of a saved agent. The environment settings stored in
/// the checkpoint are reused when present.
pub fn evaluate_policy(
    checkpoint: &Path,
    case_path: &Path,
    episodes: usize,
    seed: u64,
) -> Result<EvaluationReport, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be at least 1".into()));
    }
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| checkpoint_err(checkpoint, e))?;
    let case = load_case_file(case_path)?;
    let mut env_config: EnvConfig = ckpt
        .meta("env_config")
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default();
    env_config.seed = split_seed(seed, SeedStream::Evaluation);
    let mut env =
        GridEnv::new(case, env_config).map_err(|e| HarnessError::Config(e.to_string()))?;
    let agent = load_agent(&ckpt, env.observation_len(), env.action_space_size())?;
    let outcomes = (0..episodes)
        .map(|_| evaluate_episode(agent.as_ref(), &mut env))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Agent(e.into()))?;
    Ok(mean_report(agent.algorithm().name(), &outcomes))
}

/// Monte-Carlo mean episode reward of the uniformly random policy.
pub fn random_policy_mean(
    case: impl Into<Arc<GridCase>>,
    env_config: EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let mut env =
        GridEnv::new(case, env_config).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, SeedStream::Evaluation));
    let mut total = 0.0;
    for _ in 0..episodes {
        total += random_episode(&mut env, &mut rng)
            .map_err(|e| HarnessError::Agent(e.into()))?
            .cumulative_reward;
    }
    Ok(total / episodes.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_file_names() {
        assert_eq!(
            parse_run_file("ddsac_seed12.csv"),
            Some((Algorithm::Ddsac, 12))
        );
        assert_eq!(parse_run_file("ppo_seed3.csv"), Some((Algorithm::Ppo, 3)));
        assert_eq!(parse_run_file("aggregate_ppo_power_loss.csv"), None);
        assert_eq!(parse_run_file("ddqn_seed1.ckpt"), None);
    }
}
