use ndarray::{Array2, Axis};
use rand::Rng;

use super::{Dense, Mlp, MlpCache, NnError, Params};

/// Q-network split into a state-value stream and an action-advantage
/// stream over a shared rectified trunk:
/// `Q(s,a) = V(s) + A(s,a) − mean_a' A(s,a')`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet {
    pub trunk: Mlp,
    pub value: Dense,
    pub advantage: Dense,
}

#[derive(Debug, Clone)]
pub struct DuelingCache {
    trunk: MlpCache,
    features: Array2<f64>,
    /// `batch × 1`
    pub value: Array2<f64>,
    /// `batch × actions`
    pub advantage: Array2<f64>,
}

impl DuelingNet {
    /// `hidden` lists the trunk widths, e.g. `[256, 256]`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        actions: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::init(&sizes, true, rng);
        let width = trunk.output_dim();
        DuelingNet {
            trunk,
            value: Dense::init(width, 1, rng),
            advantage: Dense::init(width, actions, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn actions(&self) -> usize {
        self.advantage.fan_out()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, DuelingCache), NnError> {
        let (features, trunk) = self.trunk.forward(x)?;
        let value = self.value.forward(&features)?;
        let advantage = self.advantage.forward(&features)?;
        let mean = advantage.mean_axis(Axis(1)).expect("at least one action");
        let mut q = advantage.clone();
        for ((mut row, v), m) in q.axis_iter_mut(Axis(0)).zip(value.column(0)).zip(&mean) {
            row.mapv_inplace(|a| v + a - m);
        }
        Ok((
            q,
            DuelingCache {
                trunk,
                features,
                value,
                advantage,
            },
        ))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        Ok(self.forward(&x)?.0.into_raw_vec_and_offset().0)
    }

    /// Gradients of a loss given `∂L/∂Q` (`batch × actions`).
    pub fn backward(
        &self,
        cache: &DuelingCache,
        grad_q: &Array2<f64>,
    ) -> Result<DuelingNet, NnError> {
        if grad_q.dim() != cache.advantage.dim() || cache.features.ncols() != self.value.fan_in() {
            return Err(NnError::StaleCache);
        }
        let grad_v = grad_q.sum_axis(Axis(1)).insert_axis(Axis(1));
        let mean = grad_q.mean_axis(Axis(1)).expect("at least one action");
        let mut grad_a = grad_q.clone();
        for (mut row, m) in grad_a.axis_iter_mut(Axis(0)).zip(&mean) {
            row.mapv_inplace(|g| g - m);
        }
        let (value, gx_v) = self.value.backward(&cache.features, &grad_v);
        let (advantage, gx_a) = self.advantage.backward(&cache.features, &grad_a);
        let (trunk, _) = self.trunk.backward(&cache.trunk, &(gx_v + gx_a))?;
        Ok(DuelingNet {
            trunk,
            value,
            advantage,
        })
    }
}

impl Params for DuelingNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.trunk.tensors();
        self.value.push_tensors(&mut out);
        self.advantage.push_tensors(&mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.tensors_mut();
        self.value.push_tensors_mut(&mut out);
        self.advantage.push_tensors_mut(&mut out);
        out
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self
            .trunk
            .layout()
            .into_iter()
            .map(|(n, s)| (format!("trunk.{n}"), s))
            .collect();
        self.value.push_layout("value", &mut out);
        self.advantage.push_layout("advantage", &mut out);
        out
    }
}

/// Row-wise log-softmax with the row maximum subtracted first.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

/// Categorical policy: rectified trunk followed by a logits head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub trunk: Mlp,
    pub logits: Dense,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    trunk: MlpCache,
    features: Array2<f64>,
    pub logits: Array2<f64>,
}

impl PolicyNet {
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        actions: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::init(&sizes, true, rng);
        let width = trunk.output_dim();
        PolicyNet {
            trunk,
            logits: Dense::init(width, actions, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn actions(&self) -> usize {
        self.logits.fan_out()
    }

    /// Returns `(probabilities, log_probabilities, cache)`, each
    /// `batch × actions`.
    pub fn forward(
        &self,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, PolicyCache), NnError> {
        let (features, trunk) = self.trunk.forward(x)?;
        let logits = self.logits.forward(&features)?;
        let log_p = log_softmax_rows(&logits);
        let p = log_p.mapv(f64::exp);
        Ok((
            p,
            log_p,
            PolicyCache {
                trunk,
                features,
                logits,
            },
        ))
    }

    /// Probabilities and log-probabilities for one state.
    pub fn distribution(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let (p, log_p, _) = self.forward(&x)?;
        Ok((
            p.into_raw_vec_and_offset().0,
            log_p.into_raw_vec_and_offset().0,
        ))
    }

    /// Gradients given `∂L/∂logits`.
    pub fn backward(
        &self,
        cache: &PolicyCache,
        grad_logits: &Array2<f64>,
    ) -> Result<PolicyNet, NnError> {
        if grad_logits.dim() != cache.logits.dim() || cache.features.ncols() != self.logits.fan_in()
        {
            return Err(NnError::StaleCache);
        }
        let (logits, gx) = self.logits.backward(&cache.features, grad_logits);
        let (trunk, _) = self.trunk.backward(&cache.trunk, &gx)?;
        Ok(PolicyNet { trunk, logits })
    }
}

impl Params for PolicyNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.trunk.tensors();
        self.logits.push_tensors(&mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.tensors_mut();
        self.logits.push_tensors_mut(&mut out);
        out
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self
            .trunk
            .layout()
            .into_iter()
            .map(|(n, s)| (format!("trunk.{n}"), s))
            .collect();
        self.logits.push_layout("logits", &mut out);
        out
    }
}
