use crate::nn::{Checkpoint, CheckpointError};

const CLIP: f64 = 10.0;
const VAR_EPS: f64 = 1e-8;

/// Running per-feature mean and variance (Welford), used to standardize
/// raw observations before they reach a network.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            self.m2[i] / self.count as f64
        }
    }

    /// `(x − mean)/√(var + 1e−8)`, clipped to ±10.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                ((v - self.mean[i]) / (self.variance(i) + VAR_EPS).sqrt()).clamp(-CLIP, CLIP)
            })
            .collect()
    }

    pub fn save(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.set_meta(&format!("{prefix}.count"), self.count.to_string());
        ckpt.insert_array(
            &format!("{prefix}.mean"),
            vec![self.dim()],
            self.mean.clone(),
        );
        ckpt.insert_array(&format!("{prefix}.m2"), vec![self.dim()], self.m2.clone());
    }

    pub fn load(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<(), CheckpointError> {
        let key = format!("{prefix}.count");
        self.count = ckpt
            .meta(&key)
            .and_then(|s| s.parse().ok())
            .ok_or(CheckpointError::Missing(key))?;
        let d = self.dim();
        self.mean = ckpt.array(&format!("{prefix}.mean"), &[d])?.to_vec();
        self.m2 = ckpt.array(&format!("{prefix}.m2"), &[d])?.to_vec();
        Ok(())
    }
}
