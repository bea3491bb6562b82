//! Proximal policy optimization with a clipped surrogate and generalized
//! advantage estimation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, check_meta, rows_to_array, sample_categorical, write_meta, Agent, AgentError,
    Algorithm, EpisodeOutcome, RunningNorm,
};
use crate::env::GridEnv;
use crate::nn::{Adam, Checkpoint, Mlp, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub rollout_length: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden: vec![256, 256],
            lr: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.02,
            value_coef: 0.5,
            rollout_length: 256,
            epochs: 4,
            minibatch: 64,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if self.rollout_length == 0 || self.epochs == 0 || self.minibatch == 0 {
            return bad("rollout length, epochs and minibatch must be positive");
        }
        Ok(())
    }
}

/// Advantages and returns; `last_value` bootstraps the step after the
/// final sample unless that sample was terminal.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * mask * next_value - values[t];
        running = delta + gamma * lambda * mask * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let scale = var.sqrt() + 1e-8;
    for a in adv {
        *a = (*a - mean) / scale;
    }
}

/// `min(ρ·Â, clip(ρ)·Â)` and its derivative with respect to `ρ`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Samples gathered with a fixed policy; states are stored standardized
/// with the statistics in force when they were collected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn clear(&mut self) {
        *self = Rollout::default();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRollout {
    pub rollout: Rollout,
    /// Normalized.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub policy: PolicyNet,
    pub value: Mlp,
    pub norm: RunningNorm,
    pub rollout: Rollout,
    opt_policy: Adam,
    opt_value: Adam,
    sampler: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: PpoConfig) -> Result<Self, AgentError> {
        config.validate()?;
        if action_dim < 2 {
            return Err(AgentError::InvalidDim(action_dim));
        }
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sampler = ChaCha8Rng::seed_from_u64(config.seed);
        sampler.set_stream(1);
        let policy = PolicyNet::init(obs_dim, &config.hidden, action_dim, &mut init);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let value = Mlp::init(&sizes, false, &mut init);
        Ok(PpoAgent {
            opt_policy: Adam::new(&policy, config.lr),
            opt_value: Adam::new(&value, config.lr),
            policy,
            value,
            norm: RunningNorm::new(obs_dim),
            rollout: Rollout::default(),
            sampler,
            config,
        })
    }

    /// Updates the running statistics with `obs`, samples an action and
    /// records the state, action, log-probability and value estimate.
    fn act_and_record(&mut self, obs: &[f64]) -> Result<usize, AgentError> {
        self.norm.update(obs);
        let z = self.norm.normalize(obs);
        let (p, log_p) = self.policy.distribution(&z)?;
        let action = sample_categorical(&p, &mut self.sampler);
        let v = self.value.predict(&z)?[0];
        self.rollout.states.push(z);
        self.rollout.actions.push(action);
        self.rollout.log_probs.push(log_p[action]);
        self.rollout.values.push(v);
        Ok(action)
    }

    /// Computes advantages for the stored rollout.
    pub fn prepare(&self, rollout: Rollout, last_value: f64) -> PreparedRollout {
        let (mut advantages, returns) = gae(
            &rollout.rewards,
            &rollout.values,
            &rollout.dones,
            last_value,
            self.config.gamma,
            self.config.gae_lambda,
        );
        normalize_advantages(&mut advantages);
        PreparedRollout {
            rollout,
            advantages,
            returns,
        }
    }

    /// Probability ratios of the current policy against the rollout policy.
    pub fn ratios(&self, rollout: &Rollout) -> Result<Vec<f64>, AgentError> {
        let refs: Vec<&[f64]> = rollout.states.iter().map(Vec::as_slice).collect();
        let (_, log_p, _) = self.policy.forward(&rows_to_array(&refs))?;
        Ok(rollout
            .actions
            .iter()
            .enumerate()
            .map(|(i, &a)| (log_p[[i, a]] - rollout.log_probs[i]).exp())
            .collect())
    }

    /// Several epochs of shuffled mini-batch steps. Returned statistics
    /// are averaged over the final epoch.
    pub fn update(&mut self, prepared: &PreparedRollout) -> Result<PpoStats, AgentError> {
        let n = prepared.rollout.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = PpoStats::default();
        for _ in 0..self.config.epochs {
            order.shuffle(&mut self.sampler);
            stats = PpoStats::default();
            for chunk in order.chunks(self.config.minibatch) {
                let s = self.minibatch_step(prepared, chunk)?;
                let w = chunk.len() as f64 / n as f64;
                stats.policy_loss += w * s.policy_loss;
                stats.value_loss += w * s.value_loss;
                stats.entropy += w * s.entropy;
            }
        }
        Ok(stats)
    }

    fn minibatch_step(
        &mut self,
        prep: &PreparedRollout,
        idx: &[usize],
    ) -> Result<PpoStats, AgentError> {
        let rows: Vec<&[f64]> = idx
            .iter()
            .map(|&i| prep.rollout.states[i].as_slice())
            .collect();
        let x = rows_to_array(&rows);
        let m = idx.len() as f64;
        let c = &self.config;

        let (p, log_p, cache) = self.policy.forward(&x)?;
        let mut grad_logits = Array2::zeros(p.dim());
        let mut stats = PpoStats::default();
        for (b, &i) in idx.iter().enumerate() {
            let a = prep.rollout.actions[i];
            let ratio = (log_p[[b, a]] - prep.rollout.log_probs[i]).exp();
            let (surr, d_ratio) = clipped_surrogate(ratio, prep.advantages[i], c.clip);
            let h: f64 = -(0..p.ncols())
                .map(|j| p[[b, j]] * log_p[[b, j]])
                .sum::<f64>();
            for j in 0..p.ncols() {
                let indicator = if j == a { 1.0 } else { 0.0 };
                let d_surr = -d_ratio * ratio * (indicator - p[[b, j]]);
                let d_ent = c.entropy_coef * p[[b, j]] * (log_p[[b, j]] + h);
                grad_logits[[b, j]] = (d_surr + d_ent) / m;
            }
            stats.policy_loss += -surr / m;
            stats.entropy += h / m;
        }
        let g = self.policy.backward(&cache, &grad_logits)?;

        let (v, vcache) = self.value.forward(&x)?;
        let mut grad_v = Array2::zeros(v.dim());
        for (b, &i) in idx.iter().enumerate() {
            let err = v[[b, 0]] - prep.returns[i];
            stats.value_loss += err * err / m;
            grad_v[[b, 0]] = 2.0 * c.value_coef * err / m;
        }
        let (gv, _) = self.value.backward(&vcache, &grad_v)?;

        self.opt_policy.step(&mut self.policy, &g)?;
        self.opt_value.step(&mut self.value, &gv)?;
        Ok(stats)
    }

    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        obs_dim: Option<usize>,
        action_dim: Option<usize>,
    ) -> Result<Self, AgentError> {
        let (o, a) = check_meta(ckpt, Algorithm::Ppo, obs_dim, action_dim)?;
        let config: PpoConfig = ckpt
            .meta("config")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| AgentError::CheckpointMismatch("missing agent config".into()))?;
        let mut agent = PpoAgent::new(o, a, config)?;
        ckpt.load_params("policy", &mut agent.policy)?;
        ckpt.load_params("value", &mut agent.value)?;
        agent.opt_policy.load(ckpt, "adam.policy")?;
        agent.opt_value.load(ckpt, "adam.value")?;
        agent.norm.load(ckpt, "norm")?;
        Ok(agent)
    }
}

impl Agent for PpoAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ppo
    }

    fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.policy.actions()
    }

    fn train_episode(&mut self, env: &mut GridEnv) -> Result<EpisodeOutcome, AgentError> {
        let mut obs = env.reset()?.values;
        let mut out = EpisodeOutcome::default();
        loop {
            let action = self.act_and_record(&obs)?;
            let step = env.step(action)?;
            out.record(&step, env.status().open_count());
            self.rollout.rewards.push(step.reward);
            self.rollout.dones.push(step.done);
            obs = step.observation.values;
            if self.rollout.len() >= self.config.rollout_length {
                let last_value = if step.done {
                    0.0
                } else {
                    self.value.predict(&self.norm.normalize(&obs))?[0]
                };
                let rollout = std::mem::take(&mut self.rollout);
                let prepared = self.prepare(rollout, last_value);
                self.update(&prepared)?;
                self.rollout.clear();
                out.updates += 1;
            }
            if step.done {
                return Ok(out);
            }
        }
    }

    fn greedy_action(&self, obs: &[f64]) -> usize {
        self.policy
            .distribution(&self.norm.normalize(obs))
            .map(|(p, _)| argmax(&p))
            .unwrap_or(0)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        write_meta(&mut ckpt, Algorithm::Ppo, self.obs_dim(), self.action_dim());
        ckpt.set_meta(
            "config",
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        ckpt.insert_params("policy", &self.policy);
        ckpt.insert_params("value", &self.value);
        self.opt_policy.save(&mut ckpt, "adam.policy");
        self.opt_value.save(&mut ckpt, "adam.value");
        self.norm.save(&mut ckpt, "norm");
        ckpt
    }
}
