//! AC power flow: admittance assembly, islanding checks, Newton–Raphson.

mod admittance;
mod connectivity;
mod flows;
mod newton;

use thiserror::Error;

pub use admittance::{
    branch_admittance, build_admittance, AdmittanceModel, BranchAdmittance, SparseComplex,
};
pub use connectivity::{check_connectivity, Connectivity};
pub use flows::{compute_branch_quantities, BranchFlows};
pub use newton::{solve_newton_raphson, solve_with_loads, PowerFlowSolution, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("status vector has length {got}, case has {expected} switchable lines")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("slack component does not reach every loaded or generating bus")]
    IslandedInput,
    #[error("case has no slack bus")]
    NoSlack,
}

/// In-service flags for every switchable line, in `switchable_lines` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopologyStatus(Vec<bool>);

impl TopologyStatus {
    pub fn new(status: Vec<bool>) -> Self {
        TopologyStatus(status)
    }

    pub fn all_in(n_lines: usize) -> Self {
        TopologyStatus(vec![true; n_lines])
    }

    pub fn from_case(case: &crate::case::GridCase) -> Self {
        TopologyStatus(case.initial_status())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_in(&self, line: usize) -> bool {
        self.0[line]
    }

    pub fn set(&mut self, line: usize, in_service: bool) {
        self.0[line] = in_service;
    }

    pub fn toggle(&mut self, line: usize) {
        self.0[line] = !self.0[line];
    }

    pub fn open_count(&self) -> usize {
        self.0.iter().filter(|s| !**s).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<(), PowerFlowError> {
        if self.0.len() != expected {
            return Err(PowerFlowError::DimensionMismatch {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}
