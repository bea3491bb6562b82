//! Transmission switching as a discrete-action reinforcement-learning
//! problem: MATPOWER case ingestion, an AC power-flow solver, the grid
//! environment, hand-differentiated networks, the discrete dueling soft
//! actor-critic agent with DDQN and PPO baselines, and the experiment
//! harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod case;
pub mod env;
pub mod harness;
pub mod nn;
pub mod powerflow;

pub use agent::{Agent, AgentError, Algorithm, EpisodeOutcome, ReplayBuffer, Transition};
pub use case::{parse_case, CaseError, GridCase};
pub use env::{EnvConfig, EnvError, GridEnv, Observation, StepResult};
pub use harness::{EpisodeMetrics, HarnessError, RunConfig};
pub use powerflow::{PowerFlowError, PowerFlowSolution, SolverOptions, TopologyStatus};
