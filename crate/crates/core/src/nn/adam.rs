use super::{check_congruent, Checkpoint, CheckpointError, NnError, Params};

/// Bias-corrected adaptive-moment optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Params>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        check_congruent(params, grads)?;
        let shapes_match = self.first_moment.len() == params.tensors().len()
            && self
                .first_moment
                .iter()
                .zip(params.tensors())
                .all(|(m, p)| m.len() == p.len());
        if !shapes_match {
            return Err(NnError::ShapeMismatch {
                expected: self.first_moment.iter().map(Vec::len).sum(),
                got: params.param_count(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    pub fn save(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.set_meta(&format!("{prefix}.step_count"), self.step_count.to_string());
        ckpt.insert_array(
            &format!("{prefix}.hyper"),
            vec![4],
            vec![self.lr, self.beta1, self.beta2, self.epsilon],
        );
        for (i, (m, v)) in self
            .first_moment
            .iter()
            .zip(&self.second_moment)
            .enumerate()
        {
            ckpt.insert_array(&format!("{prefix}.m{i}"), vec![m.len()], m.clone());
            ckpt.insert_array(&format!("{prefix}.v{i}"), vec![v.len()], v.clone());
        }
    }

    /// Restores moments into an optimizer created for the same parameter set.
    pub fn load(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<(), CheckpointError> {
        let key = format!("{prefix}.step_count");
        self.step_count = ckpt
            .meta(&key)
            .and_then(|s| s.parse().ok())
            .ok_or(CheckpointError::Missing(key))?;
        let hyper = ckpt.array(&format!("{prefix}.hyper"), &[4])?;
        self.lr = hyper[0];
        self.beta1 = hyper[1];
        self.beta2 = hyper[2];
        self.epsilon = hyper[3];
        for i in 0..self.first_moment.len() {
            let n = self.first_moment[i].len();
            self.first_moment[i] = ckpt.array(&format!("{prefix}.m{i}"), &[n])?.to_vec();
            self.second_moment[i] = ckpt.array(&format!("{prefix}.v{i}"), &[n])?.to_vec();
        }
        Ok(())
    }
}
