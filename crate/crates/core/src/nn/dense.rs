use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{NnError, Params};

/// Affine layer `y = x·Wᵀ + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
        Dense { weight, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        if x.ncols() != self.fan_in() {
            return Err(NnError::ShapeMismatch {
                expected: self.fan_in(),
                got: x.ncols(),
            });
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Returns parameter gradients and `∂L/∂x` for the input `x` seen in
    /// the forward pass.
    pub fn backward(&self, x: &Array2<f64>, grad_out: &Array2<f64>) -> (Dense, Array2<f64>) {
        let grad = Dense {
            weight: grad_out.t().dot(x),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad, grad_out.dot(&self.weight))
    }

    pub(crate) fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.push(self.weight.as_slice().expect("standard layout"));
        out.push(self.bias.as_slice().expect("standard layout"));
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.weight.as_slice_mut().expect("standard layout"));
        out.push(self.bias.as_slice_mut().expect("standard layout"));
    }

    pub(crate) fn push_layout(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        out.push((
            format!("{prefix}.weight"),
            vec![self.fan_out(), self.fan_in()],
        ));
        out.push((format!("{prefix}.bias"), vec![self.fan_out()]));
    }
}

impl Params for Dense {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.push_tensors(&mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_tensors_mut(&mut out);
        out
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.push_layout("dense", &mut out);
        out
    }
}

/// Stack of dense layers with rectified-linear activations between them.
/// The last layer is rectified only when `relu_output` is set, which is how
/// the shared trunks of the head networks are built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_output: bool,
}

/// Inputs and pre-activations of every layer from one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], relu_output: bool, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            relu_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::fan_out).unwrap_or(0)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache), NnError> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            let next = if i < last || self.relu_output {
                relu(&z)
            } else {
                z.clone()
            };
            cache.inputs.push(h);
            cache.pre.push(z);
            h = next;
        }
        Ok((h, cache))
    }

    /// Forward pass for a single input vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        Ok(self.forward(&x)?.0.into_raw_vec_and_offset().0)
    }

    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Array2<f64>,
    ) -> Result<(Mlp, Array2<f64>), NnError> {
        if cache.pre.len() != self.layers.len()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(z, l)| z.ncols() != l.fan_out())
            || grad_out.dim() != cache.pre.last().map(|z| z.dim()).unwrap_or_default()
        {
            return Err(NnError::StaleCache);
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last || self.relu_output {
                g.zip_mut_with(&cache.pre[i], |gi, zi| {
                    if *zi <= 0.0 {
                        *gi = 0.0
                    }
                });
            }
            let (lg, gx) = self.layers[i].backward(&cache.inputs[i], &g);
            grads.push(lg);
            g = gx;
        }
        grads.reverse();
        Ok((
            Mlp {
                layers: grads,
                relu_output: self.relu_output,
            },
            g,
        ))
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.push_tensors(&mut out);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            l.push_tensors_mut(&mut out);
        }
        out
    }

    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.push_layout(&format!("layer{i}"), &mut out);
        }
        out
    }
}
