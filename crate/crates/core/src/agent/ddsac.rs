//! Discrete dueling soft actor-critic.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, batch_states, check_meta, entropy, floored_log, sample_categorical, write_meta,
    ActionMode, Agent, AgentError, Algorithm, EpisodeOutcome, ReplayBuffer, RunningNorm,
    Transition,
};
use crate::env::GridEnv;
use crate::nn::{soft_update, Adam, Checkpoint, DuelingNet, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdsacConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Learning rate for `log_alpha`; `None` uses `lr`.
    pub alpha_lr: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// `None` performs one update per step collected in the episode.
    pub updates_per_episode: Option<usize>,
    /// Minimum stored transitions before updates start; `None` means `batch_size`.
    pub warmup: Option<usize>,
    pub init_log_alpha: f64,
    pub seed: u64,
}

impl Default for DdsacConfig {
    fn default() -> Self {
        DdsacConfig {
            hidden: vec![256, 256],
            lr: 1e-4,
            alpha_lr: None,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 32,
            buffer_capacity: 100_000,
            updates_per_episode: None,
            warmup: None,
            init_log_alpha: 0.0,
            seed: 0,
        }
    }
}

impl DdsacConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.lr > 0.0) || self.alpha_lr.is_some_and(|a| !(a > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !self.init_log_alpha.is_finite() {
            return bad("init_log_alpha must be finite");
        }
        Ok(())
    }
}

/// `0.25 · ln |A|`.
pub fn target_entropy(action_dim: usize) -> Result<f64, AgentError> {
    if action_dim < 2 {
        return Err(AgentError::InvalidDim(action_dim));
    }
    Ok(0.25 * (action_dim as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub loss1: f64,
    pub loss2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStats {
    pub policy_loss: f64,
    pub alpha_loss: f64,
    /// Mean policy entropy over the batch, before the step.
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct DdsacAgent {
    pub config: DdsacConfig,
    pub policy: PolicyNet,
    pub critic1: DuelingNet,
    pub critic2: DuelingNet,
    pub target1: DuelingNet,
    pub target2: DuelingNet,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub norm: RunningNorm,
    pub buffer: ReplayBuffer,
    opt_policy: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    opt_alpha: Adam,
    sampler: ChaCha8Rng,
    updates: u64,
}

impl DdsacAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: DdsacConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let target_entropy = target_entropy(action_dim)?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sampler = ChaCha8Rng::seed_from_u64(config.seed);
        sampler.set_stream(1);
        let policy = PolicyNet::init(obs_dim, &config.hidden, action_dim, &mut init);
        let critic1 = DuelingNet::init(obs_dim, &config.hidden, action_dim, &mut init);
        let critic2 = DuelingNet::init(obs_dim, &config.hidden, action_dim, &mut init);
        let log_alpha = config.init_log_alpha;
        Ok(DdsacAgent {
            opt_policy: Adam::new(&policy, config.lr),
            opt_critic1: Adam::new(&critic1, config.lr),
            opt_critic2: Adam::new(&critic2, config.lr),
            opt_alpha: Adam::new(&log_alpha, config.alpha_lr.unwrap_or(config.lr)),
            target1: critic1.clone(),
            target2: critic2.clone(),
            policy,
            critic1,
            critic2,
            log_alpha,
            target_entropy,
            norm: RunningNorm::new(obs_dim),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            sampler,
            updates: 0,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    fn warmup(&self) -> usize {
        self.config.warmup.unwrap_or(self.config.batch_size)
    }

    /// Action for a raw observation.
    pub fn select_action(&mut self, obs: &[f64], mode: ActionMode) -> Result<usize, AgentError> {
        let (p, _) = self.policy.distribution(&self.norm.normalize(obs))?;
        Ok(match mode {
            ActionMode::Stochastic => sample_categorical(&p, &mut self.sampler),
            ActionMode::Greedy => argmax(&p),
        })
    }

    /// Stores a transition and folds its state into the running statistics.
    pub fn store(&mut self, t: Transition) {
        self.norm.update(&t.state);
        self.buffer.push(t);
    }

    /// Soft Bellman targets with the expectation over next actions taken
    /// exactly.
    pub fn compute_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
        let next = batch_states(&self.norm, batch, true);
        let (p, log_p, _) = self.policy.forward(&next)?;
        let (q1, _) = self.target1.forward(&next)?;
        let (q2, _) = self.target2.forward(&next)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, t)| {
                if t.done {
                    return t.reward;
                }
                let soft_value: f64 = (0..p.ncols())
                    .map(|a| {
                        let min_q = q1[[b, a]].min(q2[[b, a]]);
                        p[[b, a]] * (min_q - alpha * floored_log(log_p[[b, a]]))
                    })
                    .sum();
                t.reward + self.config.gamma * soft_value
            })
            .collect())
    }

    /// One optimizer step on each critic against fixed targets.
    pub fn update_critics(&mut self, batch: &[&Transition]) -> Result<CriticLosses, AgentError> {
        let y = self.compute_targets(batch)?;
        let states = batch_states(&self.norm, batch, false);
        let n = batch.len() as f64;
        let mut losses = [0.0; 2];
        for (i, loss) in losses.iter_mut().enumerate() {
            let critic = if i == 0 { &self.critic1 } else { &self.critic2 };
            let (q, cache) = critic.forward(&states)?;
            let mut grad = Array2::zeros(q.dim());
            for (b, t) in batch.iter().enumerate() {
                let err = q[[b, t.action]] - y[b];
                *loss += err * err / n;
                grad[[b, t.action]] = 2.0 * err / n;
            }
            let g = critic.backward(&cache, &grad)?;
            if i == 0 {
                self.opt_critic1.step(&mut self.critic1, &g)?;
            } else {
                self.opt_critic2.step(&mut self.critic2, &g)?;
            }
        }
        Ok(CriticLosses {
            loss1: losses[0],
            loss2: losses[1],
        })
    }

    /// Policy step against the element-wise minimum critic, then a
    /// temperature step towards the target entropy. Both use the same
    /// forward pass of the policy.
    pub fn update_policy_and_temperature(
        &mut self,
        batch: &[&Transition],
    ) -> Result<PolicyStats, AgentError> {
        let states = batch_states(&self.norm, batch, false);
        let (q1, _) = self.critic1.forward(&states)?;
        let (q2, _) = self.critic2.forward(&states)?;
        let (p, log_p, cache) = self.policy.forward(&states)?;
        let alpha = self.alpha();
        let n = batch.len() as f64;
        let actions = p.ncols();
        let mut grad = Array2::zeros(p.dim());
        let (mut policy_loss, mut mean_entropy) = (0.0, 0.0);
        let mut f = vec![0.0; actions];
        for b in 0..batch.len() {
            let mut expected = 0.0;
            let mut h = 0.0;
            for a in 0..actions {
                let lp = floored_log(log_p[[b, a]]);
                f[a] = alpha * lp - q1[[b, a]].min(q2[[b, a]]);
                expected += p[[b, a]] * f[a];
                h -= p[[b, a]] * lp;
            }
            for a in 0..actions {
                grad[[b, a]] = p[[b, a]] * (f[a] - expected) / n;
            }
            policy_loss += expected / n;
            mean_entropy += h / n;
        }
        let g = self.policy.backward(&cache, &grad)?;
        self.opt_policy.step(&mut self.policy, &g)?;

        let alpha_loss = alpha * (mean_entropy - self.target_entropy);
        let alpha_grad = alpha_loss;
        self.opt_alpha.step(&mut self.log_alpha, &alpha_grad)?;
        Ok(PolicyStats {
            policy_loss,
            alpha_loss,
            entropy: mean_entropy,
        })
    }

    pub fn soft_update(&mut self) -> Result<(), AgentError> {
        soft_update(&mut self.target1, &self.critic1, self.config.tau)?;
        soft_update(&mut self.target2, &self.critic2, self.config.tau)?;
        Ok(())
    }

    /// Samples a mini-batch and runs critic, policy, temperature and
    /// target updates in that order.
    pub fn update_step(&mut self) -> Result<(CriticLosses, PolicyStats), AgentError> {
        let batch = self
            .buffer
            .clone_sample(self.config.batch_size, &mut self.sampler);
        let refs: Vec<&Transition> = batch.iter().collect();
        let critic = self.update_critics(&refs)?;
        let policy = self.update_policy_and_temperature(&refs)?;
        self.soft_update()?;
        self.updates += 1;
        Ok((critic, policy))
    }

    /// Policy distribution for a raw observation.
    pub fn policy_distribution(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.policy.distribution(&self.norm.normalize(obs))?.0)
    }

    pub fn policy_entropy(&self, obs: &[f64]) -> Result<f64, AgentError> {
        Ok(entropy(&self.policy_distribution(obs)?))
    }

    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        obs_dim: Option<usize>,
        action_dim: Option<usize>,
    ) -> Result<Self, AgentError> {
        let (o, a) = check_meta(ckpt, Algorithm::Ddsac, obs_dim, action_dim)?;
        let config: DdsacConfig = ckpt
            .meta("config")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| AgentError::CheckpointMismatch("missing agent config".into()))?;
        let mut agent = DdsacAgent::new(o, a, config)?;
        ckpt.load_params("policy", &mut agent.policy)?;
        ckpt.load_params("critic1", &mut agent.critic1)?;
        ckpt.load_params("critic2", &mut agent.critic2)?;
        ckpt.load_params("target1", &mut agent.target1)?;
        ckpt.load_params("target2", &mut agent.target2)?;
        agent.log_alpha = ckpt.array("log_alpha", &[1])?[0];
        agent.opt_policy.load(ckpt, "adam.policy")?;
        agent.opt_critic1.load(ckpt, "adam.critic1")?;
        agent.opt_critic2.load(ckpt, "adam.critic2")?;
        agent.opt_alpha.load(ckpt, "adam.alpha")?;
        agent.norm.load(ckpt, "norm")?;
        agent.updates = agent.opt_policy.step_count;
        Ok(agent)
    }
}

impl Agent for DdsacAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ddsac
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
            let action = self.select_action(&obs, ActionMode::Stochastic)?;
            let step = env.step(action)?;
            out.record(&step, env.status().open_count());
            let next = step.observation.values;
            self.store(Transition {
                state: std::mem::replace(&mut obs, next.clone()),
                action,
                reward: step.reward,
                next_state: next,
                done: step.done,
            });
            if step.done {
                break;
            }
        }
        if self.buffer.len() >= self.warmup() {
            let n = self.config.updates_per_episode.unwrap_or(out.steps);
            for _ in 0..n {
                self.update_step()?;
            }
            out.updates = n;
        }
        Ok(out)
    }

    fn greedy_action(&self, obs: &[f64]) -> usize {
        self.policy_distribution(obs)
            .map(|p| argmax(&p))
            .unwrap_or(0)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        write_meta(
            &mut ckpt,
            Algorithm::Ddsac,
            self.obs_dim(),
            self.action_dim(),
        );
        ckpt.set_meta(
            "config",
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        ckpt.insert_params("policy", &self.policy);
        ckpt.insert_params("critic1", &self.critic1);
        ckpt.insert_params("critic2", &self.critic2);
        ckpt.insert_params("target1", &self.target1);
        ckpt.insert_params("target2", &self.target2);
        ckpt.insert_array("log_alpha", vec![1], vec![self.log_alpha]);
        self.opt_policy.save(&mut ckpt, "adam.policy");
        self.opt_critic1.save(&mut ckpt, "adam.critic1");
        self.opt_critic2.save(&mut ckpt, "adam.critic2");
        self.opt_alpha.save(&mut ckpt, "adam.alpha");
        self.norm.save(&mut ckpt, "norm");
        ckpt
    }
}
