//! Learning agents sharing the environment contract: the discrete dueling
//! soft actor-critic and the DDQN and PPO baselines.

pub mod ddqn;
pub mod ddsac;
pub mod ppo;
mod replay;
mod running;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::env::{EnvError, GridEnv, StepResult};
use crate::nn::{Checkpoint, CheckpointError, NnError};

pub use replay::{ReplayBuffer, Transition};
pub use running::RunningNorm;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("action space of size {0} is too small; at least 2 actions are required")]
    InvalidDim(usize),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint does not fit: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ddsac,
    Ddqn,
    Ppo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ddsac => "ddsac",
            Algorithm::Ddqn => "ddqn",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ddsac" => Ok(Algorithm::Ddsac),
            "ddqn" => Ok(Algorithm::Ddqn),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(format!(
                "unknown algorithm `{other}` (expected ddsac, ddqn or ppo)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Greedy,
}

/// Per-episode totals over the steps actually taken.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeOutcome {
    pub cumulative_reward: f64,
    pub steps: usize,
    pub penalties: usize,
    pub generator_cost: f64,
    pub voltage_violation: f64,
    pub power_loss: f64,
    pub line_overload: f64,
    /// Open lines in the final topology.
    pub open_lines: usize,
    pub updates: usize,
}

impl EpisodeOutcome {
    pub fn record(&mut self, step: &StepResult, open_lines: usize) {
        self.cumulative_reward += step.reward;
        self.steps += 1;
        if step.breakdown.penalty_applied {
            self.penalties += 1;
        } else {
            let o = &step.breakdown.objectives;
            self.generator_cost += o.generator_cost;
            self.voltage_violation += o.voltage_violation;
            self.power_loss += o.power_loss;
            self.line_overload += o.line_overload;
        }
        self.open_lines = open_lines;
    }
}

/// What the harness needs from every trainer.
pub trait Agent {
    fn algorithm(&self) -> Algorithm;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Rolls one episode, learning as the algorithm prescribes.
    fn train_episode(&mut self, env: &mut GridEnv) -> Result<EpisodeOutcome, AgentError>;
    /// Deterministic action for evaluation; never mutates parameters.
    fn greedy_action(&self, obs: &[f64]) -> usize;
    fn to_checkpoint(&self) -> Checkpoint;
}

/// Greedy rollout of one episode.
pub fn evaluate_episode<A: Agent + ?Sized>(
    agent: &A,
    env: &mut GridEnv,
) -> Result<EpisodeOutcome, EnvError> {
    let mut obs = env.reset()?;
    let mut out = EpisodeOutcome::default();
    loop {
        let action = agent.greedy_action(&obs.values);
        let step = env.step(action)?;
        out.record(&step, env.status().open_count());
        if step.done {
            return Ok(out);
        }
        obs = step.observation;
    }
}

/// Uniformly random actions, the baseline every learner must beat.
pub fn random_episode<R: Rng + ?Sized>(
    env: &mut GridEnv,
    rng: &mut R,
) -> Result<EpisodeOutcome, EnvError> {
    env.reset()?;
    let mut out = EpisodeOutcome::default();
    let n = env.action_space_size();
    loop {
        let step = env.step(rng.random_range(0..n))?;
        out.record(&step, env.status().open_count());
        if step.done {
            return Ok(out);
        }
    }
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = a;
        }
        acc += p;
        if u < acc {
            return a;
        }
    }
    last_positive
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Standardized states (or next states) of a batch as one matrix.
pub(crate) fn batch_states(norm: &RunningNorm, batch: &[&Transition], next: bool) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| norm.normalize(if next { &t.next_state } else { &t.state }))
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    rows_to_array(&refs)
}

pub(crate) fn rows_to_array(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut out = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(src);
    }
    out
}

/// `ln p` with `p` floored at `1e−8`.
pub(crate) fn floored_log(log_p: f64) -> f64 {
    log_p.max(LOG_FLOOR)
}

pub(crate) const LOG_FLOOR: f64 = -18.420_680_743_952_367;

/// Metadata every agent checkpoint carries, checked on load.
pub(crate) fn check_meta(
    ckpt: &Checkpoint,
    algo: Algorithm,
    obs_dim: Option<usize>,
    action_dim: Option<usize>,
) -> Result<(usize, usize), AgentError> {
    let found = ckpt.meta("algo").unwrap_or("");
    if found != algo.name() {
        return Err(AgentError::CheckpointMismatch(format!(
            "checkpoint holds `{found}`, expected `{algo}`"
        )));
    }
    let read = |key: &str| -> Result<usize, AgentError> {
        ckpt.meta(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| AgentError::CheckpointMismatch(format!("missing `{key}`")))
    };
    let (o, a) = (read("obs_dim")?, read("action_dim")?);
    if obs_dim.is_some_and(|d| d != o) || action_dim.is_some_and(|d| d != a) {
        return Err(AgentError::CheckpointMismatch(format!(
            "checkpoint is for {o} observations and {a} actions, case needs {} and {}",
            obs_dim.unwrap_or(o),
            action_dim.unwrap_or(a)
        )));
    }
    Ok((o, a))
}

pub(crate) fn write_meta(
    ckpt: &mut Checkpoint,
    algo: Algorithm,
    obs_dim: usize,
    action_dim: usize,
) {
    ckpt.set_meta("algo", algo.name());
    ckpt.set_meta("obs_dim", obs_dim.to_string());
    ckpt.set_meta("action_dim", action_dim.to_string());
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let k = 5;
        let probs = vec![1.0 / k as f64; k];
        let mut counts = vec![0usize; k];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.2).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn degenerate_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = [0.0, 1.0, 0.0];
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&probs, &mut rng), 1);
        }
        assert_eq!(argmax(&probs), 1);
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Ddsac, Algorithm::Ddqn, Algorithm::Ppo] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sac".parse::<Algorithm>().is_err());
    }

    #[test]
    fn log_floor_is_ln_1e_minus_8() {
        assert_eq!(LOG_FLOOR, 1e-8_f64.ln());
        assert_eq!(floored_log(-40.0), LOG_FLOOR);
        assert_eq!(floored_log(-1.0), -1.0);
    }
}
