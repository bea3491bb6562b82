//! Double DQN with a plain Q head and epsilon-greedy exploration.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, batch_states, check_meta, write_meta, Agent, AgentError, Algorithm, EpisodeOutcome,
    ReplayBuffer, RunningNorm, Transition,
};
use crate::env::GridEnv;
use crate::nn::{Adam, Checkpoint, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    /// Multiplier applied once per episode.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// Gradient steps between hard target copies.
    pub target_update_freq: u64,
    /// `None` means `batch_size`.
    pub warmup: Option<usize>,
    pub seed: u64,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        DdqnConfig {
            hidden: vec![256, 256],
            lr: 1e-4,
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 100_000,
            epsilon_start: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.05,
            target_update_freq: 100,
            warmup: None,
            seed: 0,
        }
    }
}

impl DdqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start)
            || !unit.contains(&self.epsilon_min)
            || !unit.contains(&self.epsilon_decay)
        {
            return bad("epsilon parameters must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_update_freq == 0 {
            return bad("batch size, buffer capacity and target update frequency must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DdqnAgent {
    pub config: DdqnConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub epsilon: f64,
    pub norm: RunningNorm,
    pub buffer: ReplayBuffer,
    optimizer: Adam,
    sampler: ChaCha8Rng,
    grad_steps: u64,
}

impl DdqnAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: DdqnConfig) -> Result<Self, AgentError> {
        config.validate()?;
        if action_dim < 2 {
            return Err(AgentError::InvalidDim(action_dim));
        }
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sampler = ChaCha8Rng::seed_from_u64(config.seed);
        sampler.set_stream(1);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(action_dim);
        let online = Mlp::init(&sizes, false, &mut init);
        Ok(DdqnAgent {
            optimizer: Adam::new(&online, config.lr),
            target: online.clone(),
            online,
            epsilon: config.epsilon_start,
            norm: RunningNorm::new(obs_dim),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            sampler,
            grad_steps: 0,
            config,
        })
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.predict(&self.norm.normalize(obs))?)
    }

    pub fn select_action(&mut self, obs: &[f64]) -> Result<usize, AgentError> {
        if self.sampler.random::<f64>() < self.epsilon {
            return Ok(self.sampler.random_range(0..self.online.output_dim()));
        }
        Ok(argmax(&self.q_values(obs)?))
    }

    pub fn store(&mut self, t: Transition) {
        self.norm.update(&t.state);
        self.buffer.push(t);
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_min);
    }

    /// Online network picks the next action, target network scores it.
    pub fn ddqn_target(&self, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
        let next = batch_states(&self.norm, batch, true);
        let (q_online, _) = self.online.forward(&next)?;
        let (q_target, _) = self.target.forward(&next)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, t)| {
                if t.done {
                    return t.reward;
                }
                let row = q_online.row(b);
                let a = argmax(row.as_slice().expect("standard layout"));
                t.reward + self.config.gamma * q_target[[b, a]]
            })
            .collect())
    }

    /// One gradient step on the squared error of the taken actions.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64, AgentError> {
        let y = self.ddqn_target(batch)?;
        let states = batch_states(&self.norm, batch, false);
        let (q, cache) = self.online.forward(&states)?;
        let n = batch.len() as f64;
        let mut grad = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (b, t) in batch.iter().enumerate() {
            let err = q[[b, t.action]] - y[b];
            loss += err * err / n;
            grad[[b, t.action]] = 2.0 * err / n;
        }
        let (g, _) = self.online.backward(&cache, &grad)?;
        self.optimizer.step(&mut self.online, &g)?;
        self.grad_steps += 1;
        if self
            .grad_steps
            .is_multiple_of(self.config.target_update_freq)
        {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        obs_dim: Option<usize>,
        action_dim: Option<usize>,
    ) -> Result<Self, AgentError> {
        let (o, a) = check_meta(ckpt, Algorithm::Ddqn, obs_dim, action_dim)?;
        let config: DdqnConfig = ckpt
            .meta("config")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| AgentError::CheckpointMismatch("missing agent config".into()))?;
        let mut agent = DdqnAgent::new(o, a, config)?;
        ckpt.load_params("online", &mut agent.online)?;
        ckpt.load_params("target", &mut agent.target)?;
        agent.optimizer.load(ckpt, "adam.online")?;
        agent.norm.load(ckpt, "norm")?;
        agent.epsilon = ckpt.array("epsilon", &[1])?[0];
        agent.grad_steps = agent.optimizer.step_count;
        Ok(agent)
    }
}

impl Agent for DdqnAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ddqn
    }

    fn obs_dim(&self) -> usize {
        self.online.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.online.output_dim()
    }

    fn train_episode(&mut self, env: &mut GridEnv) -> Result<EpisodeOutcome, AgentError> {
        let mut obs = env.reset()?.values;
        let mut out = EpisodeOutcome::default();
        let warmup = self.config.warmup.unwrap_or(self.config.batch_size);
        loop {
            let action = self.select_action(&obs)?;
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
            if self.buffer.len() >= warmup {
                let batch = self
                    .buffer
                    .clone_sample(self.config.batch_size, &mut self.sampler);
                let refs: Vec<&Transition> = batch.iter().collect();
                self.train_step(&refs)?;
                out.updates += 1;
            }
            if step.done {
                break;
            }
        }
        self.decay_epsilon();
        Ok(out)
    }

    fn greedy_action(&self, obs: &[f64]) -> usize {
        self.q_values(obs).map(|q| argmax(&q)).unwrap_or(0)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        write_meta(
            &mut ckpt,
            Algorithm::Ddqn,
            self.obs_dim(),
            self.action_dim(),
        );
        ckpt.set_meta(
            "config",
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        ckpt.insert_params("online", &self.online);
        ckpt.insert_params("target", &self.target);
        self.optimizer.save(&mut ckpt, "adam.online");
        self.norm.save(&mut ckpt, "norm");
        ckpt.insert_array("epsilon", vec![1], vec![self.epsilon]);
        ckpt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DdqnAgent {
        let config = DdqnConfig {
            hidden: vec![5],
            ..DdqnConfig::default()
        };
        DdqnAgent::new(2, 3, config).unwrap()
    }

    #[test]
    fn epsilon_schedule() {
        let mut agent = small();
        for _ in 0..100 {
            agent.decay_epsilon();
        }
        assert!((agent.epsilon - 0.995_f64.powi(100)).abs() < 1e-12);
        assert!((agent.epsilon - 0.6058).abs() < 1e-4);
        for _ in 0..2000 {
            agent.decay_epsilon();
        }
        assert_eq!(agent.epsilon, 0.05);
    }

    #[test]
    fn hard_update_every_hundred_steps() {
        let mut agent = small();
        let t = Transition {
            state: vec![0.3, -1.0],
            action: 2,
            reward: 1.0,
            next_state: vec![0.1, 0.2],
            done: false,
        };
        agent.store(t.clone());
        for step in 1..=250u64 {
            agent.train_step(&[&t]).unwrap();
            if step % 100 == 0 {
                assert_eq!(agent.target, agent.online);
            } else {
                assert_ne!(agent.target, agent.online);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = small();
        agent.decay_epsilon();
        let back = DdqnAgent::from_checkpoint(&agent.to_checkpoint(), Some(2), Some(3)).unwrap();
        assert_eq!(back.online, agent.online);
        assert_eq!(back.epsilon, agent.epsilon);
        assert!(DdqnAgent::from_checkpoint(&agent.to_checkpoint(), Some(2), Some(4)).is_err());
    }
}
