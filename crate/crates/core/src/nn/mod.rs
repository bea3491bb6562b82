//! Dense networks with hand-written reverse-mode gradients.
//!
//! Everything runs in `f64` on row-major batches (`batch × features`).
//! A gradient for a network is a value of the same type holding
//! `∂loss/∂parameter` in place of each parameter.

mod adam;
mod checkpoint;
mod dense;
mod heads;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CheckpointError, NamedArray};
pub use dense::{Dense, Mlp, MlpCache};
pub use heads::{log_softmax_rows, DuelingCache, DuelingNet, PolicyCache, PolicyNet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("forward cache does not belong to this network")]
    StaleCache,
}

/// Flat access to every parameter tensor in a fixed order.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    /// Names and shapes aligned with [`Params::tensors`].
    fn layout(&self) -> Vec<(String, Vec<usize>)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Largest absolute element.
    fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl Params for f64 {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![std::slice::from_ref(self)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![std::slice::from_mut(self)]
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        vec![("value".into(), vec![1])]
    }
}

fn check_congruent<P: Params>(a: &P, b: &P) -> Result<(), NnError> {
    let (ta, tb) = (a.tensors(), b.tensors());
    if ta.len() != tb.len() {
        return Err(NnError::ShapeMismatch {
            expected: ta.len(),
            got: tb.len(),
        });
    }
    for (x, y) in ta.iter().zip(&tb) {
        if x.len() != y.len() {
            return Err(NnError::ShapeMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
    }
    Ok(())
}

/// `target ← tau·source + (1 − tau)·target`, elementwise.
pub fn soft_update<P: Params>(target: &mut P, source: &P, tau: f64) -> Result<(), NnError> {
    check_congruent(target, source)?;
    for (t, s) in target.tensors_mut().into_iter().zip(source.tensors()) {
        for (ti, si) in t.iter_mut().zip(s) {
            *ti = tau * si + (1.0 - tau) * *ti;
        }
    }
    Ok(())
}

/// `acc += other`, elementwise.
pub fn accumulate<P: Params>(acc: &mut P, other: &P) -> Result<(), NnError> {
    check_congruent(acc, other)?;
    for (a, o) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        for (ai, oi) in a.iter_mut().zip(o) {
            *ai += oi;
        }
    }
    Ok(())
}

/// Largest elementwise absolute difference between two congruent sets.
pub fn max_abs_diff<P: Params>(a: &P, b: &P) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
