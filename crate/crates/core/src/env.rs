//! Transmission-switching MDP.
//!
//! The action space is `N_L + 1`: action 0 leaves the topology alone and
//! action `k ≥ 1` toggles line `k − 1`. Each step checks connectivity, solves
//! the AC power flow and scores the new operating point with a weighted sum
//! of generator cost (relative to the all-lines-in baseline), voltage-band
//! violation, thermal overload, line losses and open-line count. Islanding or
//! a diverged power flow ends the episode with a fixed penalty.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{switchable_lines, GridCase};
use crate::powerflow::{
    check_connectivity, solve_with_loads, PowerFlowError, PowerFlowSolution, SolverOptions,
    TopologyStatus,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("power flow of the initial topology does not converge")]
    InfeasibleBaseCase,
    #[error("episode finished; call reset")]
    EpisodeFinished,
    #[error("action {action} out of range 0..{size}")]
    ActionOutOfRange { action: usize, size: usize },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Generator cost weight ($/h delta).
    pub w1: f64,
    /// Voltage-band violation weight (per-unit sum).
    pub w2: f64,
    /// Thermal overload weight.
    pub w3: f64,
    /// Line loss weight (MW).
    pub w4: f64,
    /// Open-line weight; `None` means `10 / N_L`.
    pub w5: Option<f64>,
    pub penalty: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub horizon: usize,
    /// Half-width of the uniform multiplicative load perturbation.
    pub load_noise: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            w1: 0.1,
            w2: 100.0,
            w3: 1.0,
            w4: 0.1,
            w5: None,
            penalty: 1000.0,
            v_max: 1.05,
            v_min: 0.95,
            horizon: 10,
            load_noise: 0.0,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let weights = [self.w1, self.w2, self.w3, self.w4, self.w5.unwrap_or(0.0)];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(EnvError::InvalidConfig(
                "weights must be finite and ≥ 0".into(),
            ));
        }
        if self.horizon < 1 {
            return Err(EnvError::InvalidConfig("horizon must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.load_noise) {
            return Err(EnvError::InvalidConfig(
                "load_noise must lie in [0, 1)".into(),
            ));
        }
        if !(self.v_min < self.v_max) {
            return Err(EnvError::InvalidConfig("v_min must be below v_max".into()));
        }
        if !(self.penalty >= 0.0) {
            return Err(EnvError::InvalidConfig("penalty must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn open_line_weight(&self, n_lines: usize) -> f64 {
        self.w5.unwrap_or(10.0 / n_lines.max(1) as f64)
    }
}

pub fn action_space_size(case: &GridCase) -> usize {
    switchable_lines(case).len() + 1
}

/// Positions of each block inside the flat observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub n_gen: usize,
    pub n_bus: usize,
    pub n_line: usize,
}

impl ObsLayout {
    pub fn for_case(case: &GridCase) -> Self {
        ObsLayout {
            n_gen: case.n_gen(),
            n_bus: case.n_bus(),
            n_line: switchable_lines(case).len(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_gen + 2 * self.n_bus + 3 * self.n_line + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn p_gen(&self) -> Range<usize> {
        0..self.n_gen
    }

    pub fn v_mag(&self) -> Range<usize> {
        let s = self.p_gen().end;
        s..s + self.n_bus
    }

    pub fn s_apparent(&self) -> Range<usize> {
        let s = self.v_mag().end;
        s..s + self.n_line
    }

    pub fn p_loss(&self) -> Range<usize> {
        let s = self.s_apparent().end;
        s..s + self.n_line
    }

    pub fn p_load(&self) -> Range<usize> {
        let s = self.p_loss().end;
        s..s + self.n_bus
    }

    pub fn line_status(&self) -> Range<usize> {
        let s = self.p_load().end;
        s..s + self.n_line
    }

    pub fn t_norm(&self) -> usize {
        self.line_status().end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub layout: ObsLayout,
}

impl Observation {
    pub fn slice(&self, r: Range<usize>) -> &[f64] {
        &self.values[r]
    }
}

/// Unweighted objective quantities of one operating point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Objectives {
    /// $/h relative to the episode's all-lines-in baseline.
    pub generator_cost: f64,
    /// Per-unit sum of band violations.
    pub voltage_violation: f64,
    /// Σ (S/S_max − 1)₊ over rated lines.
    pub line_overload: f64,
    /// MW
    pub power_loss: f64,
    pub open_lines: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub cost_term: f64,
    pub voltage_term: f64,
    pub overload_term: f64,
    pub loss_term: f64,
    pub open_lines_term: f64,
    pub penalty_applied: bool,
    pub total: f64,
    pub objectives: Objectives,
}

impl RewardBreakdown {
    pub fn penalty(config: &EnvConfig) -> Self {
        RewardBreakdown {
            penalty_applied: true,
            total: -config.penalty,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub converged: bool,
    pub islanded: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub breakdown: RewardBreakdown,
    pub info: StepInfo,
}

/// Total generation cost in $/h at the solved dispatch.
pub fn generation_cost(case: &GridCase, solution: &PowerFlowSolution) -> f64 {
    case.generators
        .iter()
        .zip(&solution.p_gen)
        .filter(|(g, _)| g.status)
        .map(|(g, p)| g.cost.eval(*p))
        .sum()
}

/// Weighted objective of a converged, connected operating point. The
/// penalty branch is the caller's business.
pub fn compute_reward(
    case: &GridCase,
    solution: &PowerFlowSolution,
    status: &TopologyStatus,
    baseline_cost: f64,
    config: &EnvConfig,
) -> RewardBreakdown {
    let voltage_violation: f64 = solution
        .v_mag
        .iter()
        .zip(&solution.energized)
        .filter(|(_, e)| **e)
        .map(|(v, _)| (config.v_min - v).max(0.0) + (v - config.v_max).max(0.0))
        .sum();
    let line_overload: f64 = case
        .branches
        .iter()
        .zip(solution.apparent_flow())
        .enumerate()
        .filter(|(k, (br, _))| br.rate_a > 0.0 && status.is_in(*k))
        .map(|(_, (br, s))| (s / br.rate_a - 1.0).max(0.0))
        .sum();
    let power_loss = solution.total_loss;
    let open_lines = status.open_count();
    let generator_cost = generation_cost(case, solution) - baseline_cost;

    let cost_term = config.w1 * generator_cost;
    let voltage_term = config.w2 * voltage_violation;
    let overload_term = config.w3 * line_overload;
    let loss_term = config.w4 * power_loss;
    let open_lines_term = config.open_line_weight(status.len()) * open_lines as f64;
    RewardBreakdown {
        cost_term,
        voltage_term,
        overload_term,
        loss_term,
        open_lines_term,
        penalty_applied: false,
        total: -(cost_term + voltage_term + overload_term + loss_term + open_lines_term),
        objectives: Objectives {
            generator_cost,
            voltage_violation,
            line_overload,
            power_loss,
            open_lines,
        },
    }
}

/// Flattens the state. Without a solution (penalty steps) the electrical
/// blocks are zero.
pub fn encode_state(
    layout: ObsLayout,
    solution: Option<&PowerFlowSolution>,
    p_load: &[f64],
    status: &TopologyStatus,
    t: usize,
    horizon: usize,
) -> Observation {
    let mut values = vec![0.0; layout.len()];
    if let Some(sol) = solution {
        values[layout.p_gen()].copy_from_slice(&sol.p_gen);
        values[layout.v_mag()].copy_from_slice(&sol.v_mag);
        for (k, s) in sol.apparent_flow().into_iter().enumerate() {
            values[layout.s_apparent().start + k] = if status.is_in(k) { s } else { 0.0 };
        }
        values[layout.p_loss()].copy_from_slice(&sol.p_loss_per_line);
    }
    values[layout.p_load()].copy_from_slice(p_load);
    for (k, on) in status.as_slice().iter().enumerate() {
        values[layout.line_status().start + k] = if *on { 1.0 } else { 0.0 };
    }
    values[layout.t_norm()] = t as f64 / horizon as f64;
    Observation { values, layout }
}

/// One environment instance; single-threaded, cheap to clone for rollouts.
#[derive(Debug, Clone)]
pub struct GridEnv {
    case: Arc<GridCase>,
    config: EnvConfig,
    layout: ObsLayout,
    rng: ChaCha8Rng,
    status: TopologyStatus,
    p_load: Vec<f64>,
    q_load: Vec<f64>,
    baseline_cost: f64,
    t: usize,
    done: bool,
}

impl GridEnv {
    pub fn new(case: impl Into<Arc<GridCase>>, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let case = case.into();
        let layout = ObsLayout::for_case(&case);
        Ok(GridEnv {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            status: TopologyStatus::from_case(&case),
            p_load: case.buses.iter().map(|b| b.p_load).collect(),
            q_load: case.buses.iter().map(|b| b.q_load).collect(),
            case,
            config,
            layout,
            baseline_cost: 0.0,
            t: 0,
            done: true,
        })
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn layout(&self) -> ObsLayout {
        self.layout
    }

    pub fn observation_len(&self) -> usize {
        self.layout.len()
    }

    pub fn action_space_size(&self) -> usize {
        self.layout.n_line + 1
    }

    pub fn status(&self) -> &TopologyStatus {
        &self.status
    }

    pub fn baseline_cost(&self) -> f64 {
        self.baseline_cost
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        self.status = TopologyStatus::from_case(&self.case);
        let noise = self.config.load_noise;
        for (i, bus) in self.case.buses.iter().enumerate() {
            let scale = if noise > 0.0 {
                1.0 + self.rng.random_range(-noise..noise)
            } else {
                1.0
            };
            self.p_load[i] = bus.p_load * scale;
            self.q_load[i] = bus.q_load * scale;
        }
        let sol = match self.solve()? {
            Some(sol) if sol.converged => sol,
            _ => return Err(EnvError::InfeasibleBaseCase),
        };
        self.baseline_cost = generation_cost(&self.case, &sol);
        self.t = 0;
        self.done = false;
        Ok(self.encode(Some(&sol)))
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let size = self.action_space_size();
        if action >= size {
            return Err(EnvError::ActionOutOfRange { action, size });
        }
        if action > 0 {
            self.status.toggle(action - 1);
        }
        self.t += 1;

        let solution = self.solve()?;
        let (breakdown, info, solution) = match solution {
            None => (
                RewardBreakdown::penalty(&self.config),
                StepInfo {
                    converged: false,
                    islanded: true,
                    iterations: 0,
                },
                None,
            ),
            Some(sol) if !sol.converged => (
                RewardBreakdown::penalty(&self.config),
                StepInfo {
                    converged: false,
                    islanded: false,
                    iterations: sol.iterations,
                },
                None,
            ),
            Some(sol) => (
                compute_reward(
                    &self.case,
                    &sol,
                    &self.status,
                    self.baseline_cost,
                    &self.config,
                ),
                StepInfo {
                    converged: true,
                    islanded: false,
                    iterations: sol.iterations,
                },
                Some(sol),
            ),
        };
        self.done = breakdown.penalty_applied || self.t >= self.config.horizon;
        Ok(StepResult {
            observation: self.encode(solution.as_ref()),
            reward: breakdown.total,
            done: self.done,
            breakdown,
            info,
        })
    }

    /// `None` when the topology islands a loaded or generating bus.
    fn solve(&self) -> Result<Option<PowerFlowSolution>, EnvError> {
        if !check_connectivity(&self.case, &self.status)?.connected {
            return Ok(None);
        }
        let sol = solve_with_loads(
            &self.case,
            &self.status,
            &self.p_load,
            &self.q_load,
            self.config.solver,
        )?;
        Ok(Some(sol))
    }

    fn encode(&self, solution: Option<&PowerFlowSolution>) -> Observation {
        encode_state(
            self.layout,
            solution,
            &self.p_load,
            &self.status,
            self.t,
            self.config.horizon,
        )
    }
}
