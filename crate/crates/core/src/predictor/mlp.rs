//! Fully connected classifier with a softmax head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::scalar::Scalar;

/// Number of trend classes.
pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::LeakyRelu { slope } => {
                if z > T::zero() {
                    z
                } else {
                    z * T::lit(slope)
                }
            }
        }
    }

    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::lit(slope)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpConfig {
    /// One hidden layer of 256 LeakyReLU units over an `h x 4L` window.
    pub fn baseline(history: usize, levels: usize) -> Self {
        Self {
            input_dim: history * 4 * levels,
            hidden: vec![256],
            activation: Activation::LeakyRelu { slope: 0.01 },
            output_dim: N_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.input_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(PredictorError::InvalidConfig(
                "need a positive input and at least one hidden layer".into(),
            ));
        }
        if self.output_dim != N_CLASSES {
            return Err(PredictorError::InvalidConfig(format!(
                "output must be {N_CLASSES}-way"
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// stored output-major (`outputs x inputs`), followed by the biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

fn layout(config: &MlpConfig) -> Vec<Layer> {
    let mut offset = 0;
    config
        .widths()
        .windows(2)
        .map(|w| {
            let l = Layer {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset = l.bias + w[1];
            l
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub config: MlpConfig,
    /// Layer by layer: weights (output-major), then biases.
    pub params: Vec<T>,
}

/// Output of [`Mlp::loss_and_grad`]: mean cross-entropy over the batch and
/// its gradient in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

/// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
pub fn init_mlp<T: Scalar>(config: &MlpConfig, seed: u64) -> Result<Mlp<T>, PredictorError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![T::zero(); config.param_count()];
    for l in layout(config) {
        let bound = 1.0 / (l.inputs as f64).sqrt();
        for p in &mut params[l.weights..l.bias] {
            *p = T::lit(rng.gen_range(-bound..bound));
        }
    }
    Ok(Mlp {
        config: config.clone(),
        params,
    })
}

/// Dot product with eight independent partial sums so the loop vectorizes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| *x * *y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn softmax_row<T: Scalar>(logits: &[T]) -> [T; N_CLASSES] {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: [T; N_CLASSES] = std::array::from_fn(|j| (logits[j] - max).exp());
    let s = e[0] + e[1] + e[2];
    e.map(|x| x / s)
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(config: &MlpConfig) -> Result<Self, PredictorError> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            params: vec![T::zero(); config.param_count()],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn check_input(&self, x: &[T], n: usize) -> Result<(), PredictorError> {
        if x.len() != n * self.config.input_dim {
            return Err(PredictorError::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.len() / n.max(1),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer for a batch of `n` row-major inputs.
    fn forward_all(&self, x: &[T], n: usize) -> Vec<Vec<T>> {
        let layers = layout(&self.config);
        let mut zs: Vec<Vec<T>> = Vec::with_capacity(layers.len());
        for (li, l) in layers.iter().enumerate() {
            let prev_act: Vec<T>;
            let input: &[T] = if li == 0 {
                x
            } else {
                prev_act = zs[li - 1]
                    .iter()
                    .map(|z| self.config.activation.apply(*z))
                    .collect();
                &prev_act
            };
            let w = &self.params[l.weights..l.bias];
            let b = &self.params[l.bias..l.bias + l.outputs];
            let mut z = vec![T::zero(); n * l.outputs];
            // output-major so each weight row stays cached across the batch
            for o in 0..l.outputs {
                let wrow = &w[o * l.inputs..(o + 1) * l.inputs];
                for s in 0..n {
                    let row = &input[s * l.inputs..(s + 1) * l.inputs];
                    z[s * l.outputs + o] = b[o] + dot(row, wrow);
                }
            }
            zs.push(z);
        }
        zs
    }

    /// Class probabilities (up, stationary, down) for `n` inputs.
    pub fn predict_proba(&self, x: &[T], n: usize) -> Result<Vec<[T; N_CLASSES]>, PredictorError> {
        self.check_input(x, n)?;
        let zs = self.forward_all(x, n);
        let logits = zs.last().expect("at least one layer");
        Ok(logits.chunks_exact(N_CLASSES).map(softmax_row).collect())
    }

    /// Mean softmax cross-entropy of a batch and its analytic gradient.
    pub fn loss_and_grad(
        &self,
        x: &[T],
        labels: &[usize],
        n: usize,
    ) -> Result<LossGrad<T>, PredictorError> {
        self.check_input(x, n)?;
        if labels.len() != n || n == 0 {
            return Err(PredictorError::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        let layers = layout(&self.config);
        let act = self.config.activation;
        let zs = self.forward_all(x, n);
        let inv_n = T::one() / T::from_usize_lossy(n);

        let mut loss = T::zero();
        let logits = zs.last().expect("at least one layer");
        let mut delta = vec![T::zero(); n * N_CLASSES];
        for s in 0..n {
            let row = &logits[s * N_CLASSES..(s + 1) * N_CLASSES];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|z| (*z - max).exp()).sum::<T>().ln();
            loss = loss + (lse - row[labels[s]]);
            for j in 0..N_CLASSES {
                let p = (row[j] - lse).exp();
                let target = if j == labels[s] { T::one() } else { T::zero() };
                delta[s * N_CLASSES + j] = (p - target) * inv_n;
            }
        }

        let mut grad = vec![T::zero(); self.params.len()];
        for li in (0..layers.len()).rev() {
            let l = layers[li];
            let input: Vec<T> = if li == 0 {
                x.to_vec()
            } else {
                zs[li - 1].iter().map(|z| act.apply(*z)).collect()
            };
            let (gw, rest) = grad[l.weights..].split_at_mut(l.bias - l.weights);
            let gb = &mut rest[..l.outputs];
            for s in 0..n {
                let row = &input[s * l.inputs..(s + 1) * l.inputs];
                for o in 0..l.outputs {
                    let d = delta[s * l.outputs + o];
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] = gb[o] + d;
                    for (g, a) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(row) {
                        *g = *g + d * *a;
                    }
                }
            }
            if li == 0 {
                break;
            }
            let w = &self.params[l.weights..l.bias];
            let prev_z = &zs[li - 1];
            let mut next = vec![T::zero(); n * l.inputs];
            for s in 0..n {
                let out = &mut next[s * l.inputs..(s + 1) * l.inputs];
                for o in 0..l.outputs {
                    let d = delta[s * l.outputs + o];
                    for (v, c) in out.iter_mut().zip(&w[o * l.inputs..(o + 1) * l.inputs]) {
                        *v = *v + d * *c;
                    }
                }
                for (v, z) in out
                    .iter_mut()
                    .zip(&prev_z[s * l.inputs..(s + 1) * l.inputs])
                {
                    *v = *v * act.derivative(*z);
                }
            }
            delta = next;
        }
        Ok(LossGrad {
            loss: loss * inv_n,
            grad,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            config: self.config.clone(),
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }
}
