//! Fully connected blocks with hand-written reverse-mode gradients.
//!
//! Batches are row-major `rows x width` slices. Weights are stored
//! row-major as `out_dim x in_dim`, so every forward output and every
//! weight-gradient row is a contiguous dot product or axpy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Shape of a block: consecutive layers must chain, and softmax may only
/// close the block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn relu_chain(input: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for &w in widths {
            layers.push(LayerSpec {
                in_dim: prev,
                out_dim: w,
                activation: Activation::Relu,
            });
            prev = w;
        }
        Self { layers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("block has no layers".into()));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: pair[0].out_dim,
                    found: pair[1].in_dim,
                });
            }
            if pair[0].activation == Activation::Softmax {
                return Err(Error::InvalidConfig(alloc::format!(
                    "softmax on inner layer {k}"
                )));
            }
        }
        if self.layers.iter().any(|l| l.in_dim == 0 || l.out_dim == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            in_dim: spec.in_dim,
            out_dim: spec.out_dim,
            activation: spec.activation,
            weights: vec![0.0; spec.in_dim * spec.out_dim],
            bias: vec![0.0; spec.out_dim],
        }
    }

    /// Weights uniform in `[-sqrt(6/in_dim), sqrt(6/in_dim)]`, zero biases.
    pub fn uniform<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let bound = math::sqrt(6.0 / spec.in_dim as f64);
        let mut layer = Self::zeros(spec);
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            activation: self.activation,
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    fn check_shape(&self) -> Result<()> {
        if self.weights.len() != self.in_dim * self.out_dim {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: self.in_dim * self.out_dim,
                found: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: self.out_dim,
                found: self.bias.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations `W x + b` for every row of `x`.
    fn affine(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut z = vec![0.0; rows * self.out_dim];
        for r in 0..rows {
            let xr = &x[r * self.in_dim..(r + 1) * self.in_dim];
            let zr = &mut z[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, zo) in zr.iter_mut().enumerate() {
                *zo = self.bias[o] + math::dot(self.row(o), xr);
            }
        }
        z
    }

    fn activate(&self, z: &[f64], rows: usize) -> Vec<f64> {
        match self.activation {
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Softmax => {
                let mut out = vec![0.0; z.len()];
                for r in 0..rows {
                    let span = r * self.out_dim..(r + 1) * self.out_dim;
                    math::softmax_into(&z[span.clone()], &mut out[span]);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Everything a backward pass needs from a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    pub rows: usize,
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl MlpCache {
    pub fn output_row(&self, r: usize, width: usize) -> &[f64] {
        &self.output[r * width..(r + 1) * width]
    }

    /// Pre-activation of the final layer (logits for a softmax block).
    pub fn last_pre(&self) -> &[f64] {
        self.pre.last().map_or(&[], |v| v.as_slice())
    }
}

/// Gradient arriving at the block output.
#[derive(Debug, Clone, Copy)]
pub enum OutputGrad<'a> {
    /// `dL/d output` (after the final activation).
    Activation(&'a [f64]),
    /// `dL/d pre-activation` of the final layer, bypassing its activation.
    PreActivation(&'a [f64]),
}

impl Mlp {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            layers: spec.layers.iter().map(|&s| Layer::zeros(s)).collect(),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        Self {
            layers: spec.layers.iter().map(|&s| Layer::uniform(s, rng)).collect(),
        }
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            layers: self.layers.iter().map(Layer::spec).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        for l in &self.layers {
            l.check_shape()?;
            if !math::all_finite(&l.weights) || !math::all_finite(&l.bias) {
                return Err(Error::NonFinite("parameters"));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Runs `rows` inputs (row-major) through every layer.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Result<MlpCache> {
        if x.len() != rows * self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: rows * self.in_dim(),
                found: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&current, rows);
            let a = layer.activate(&z, rows);
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok(MlpCache {
            rows,
            inputs,
            pre,
            output: current,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`
    /// when `want_input_grad` is set.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        grad: OutputGrad<'_>,
        grads: &mut Mlp,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let rows = cache.rows;
        let expected = rows * self.out_dim();
        let (g, is_pre) = match grad {
            OutputGrad::Activation(g) => (g, false),
            OutputGrad::PreActivation(g) => (g, true),
        };
        if g.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "mlp output gradient",
                expected,
                found: g.len(),
            });
        }
        let mut upstream = g.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let gz = if k == last && is_pre {
                upstream
            } else {
                activation_backward(layer, &cache.pre[k], &upstream, rows)
            };
            let x = &cache.inputs[k];
            let acc = &mut grads.layers[k];
            for r in 0..rows {
                let xr = &x[r * layer.in_dim..(r + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    let go = gz[r * layer.out_dim + o];
                    if go == 0.0 {
                        continue;
                    }
                    acc.bias[o] += go;
                    math::axpy(
                        go,
                        xr,
                        &mut acc.weights[o * layer.in_dim..(o + 1) * layer.in_dim],
                    );
                }
            }
            if k == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut gx = vec![0.0; rows * layer.in_dim];
            for r in 0..rows {
                let gxr = &mut gx[r * layer.in_dim..(r + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    let go = gz[r * layer.out_dim + o];
                    if go != 0.0 {
                        math::axpy(go, layer.row(o), gxr);
                    }
                }
            }
            upstream = gx;
        }
        Ok(Some(upstream))
    }
}

fn activation_backward(layer: &Layer, z: &[f64], g: &[f64], rows: usize) -> Vec<f64> {
    match layer.activation {
        Activation::Relu => z
            .iter()
            .zip(g)
            .map(|(&zi, &gi)| if zi > 0.0 { gi } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            let mut out = vec![0.0; z.len()];
            let mut p = vec![0.0; layer.out_dim];
            for r in 0..rows {
                let span = r * layer.out_dim..(r + 1) * layer.out_dim;
                math::softmax_into(&z[span.clone()], &mut p);
                out[span.clone()].copy_from_slice(&softmax_vjp(&p, &g[span]));
            }
            out
        }
    }
}

/// Vector-Jacobian product of softmax: `p * (g - <p, g>)`.
pub fn softmax_vjp(p: &[f64], g: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - inner)).collect()
}

/// Single-vector forward pass.
pub fn mlp_forward(block: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    Ok(block.forward_batch(x, 1)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(in_dim: usize, out_dim: usize, activation: Activation) -> MlpSpec {
        MlpSpec {
            layers: vec![LayerSpec {
                in_dim,
                out_dim,
                activation,
            }],
        }
    }

    #[test]
    fn zero_block_gives_zero_output() {
        let block = Mlp::zeros(&MlpSpec::relu_chain(3, &[4, 2]));
        assert_eq!(mlp_forward(&block, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_affine_relu() {
        let mut block = Mlp::zeros(&single(1, 1, Activation::Relu));
        block.layers[0].weights[0] = 2.0;
        block.layers[0].bias[0] = 1.0;
        assert_eq!(mlp_forward(&block, &[3.0]).unwrap(), vec![7.0]);
        assert_eq!(mlp_forward(&block, &[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let block = Mlp::zeros(&single(3, 2, Activation::Softmax));
        assert_eq!(mlp_forward(&block, &[1.0, 2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn input_dimension_is_checked() {
        let block = Mlp::zeros(&single(3, 2, Activation::Relu));
        assert!(matches!(
            mlp_forward(&block, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::relu_chain(4, &[3, 2]).validate().is_ok());
        let broken = MlpSpec {
            layers: vec![
                LayerSpec { in_dim: 4, out_dim: 3, activation: Activation::Relu },
                LayerSpec { in_dim: 2, out_dim: 2, activation: Activation::Relu },
            ],
        };
        assert!(broken.validate().is_err());
        let inner_softmax = MlpSpec {
            layers: vec![
                LayerSpec { in_dim: 4, out_dim: 3, activation: Activation::Softmax },
                LayerSpec { in_dim: 3, out_dim: 2, activation: Activation::Relu },
            ],
        };
        assert!(inner_softmax.validate().is_err());
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = Mlp::uniform(&single(6, 50, Activation::Relu), &mut rng);
        assert!(block.layers[0].weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(block.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = MlpSpec {
            layers: vec![
                LayerSpec { in_dim: 3, out_dim: 5, activation: Activation::Relu },
                LayerSpec { in_dim: 5, out_dim: 2, activation: Activation::Softmax },
            ],
        };
        let mut block = Mlp::uniform(&spec, &mut rng);
        for b in block.layers.iter_mut().flat_map(|l| l.bias.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        let x = [0.4, -1.1, 0.8, 1.5, 0.2, -0.3];
        let weights = [0.7, -1.3, 0.25, 2.0];
        let loss = |m: &Mlp| -> f64 {
            let out = m.forward_batch(&x, 2).unwrap().output;
            out.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let cache = block.forward_batch(&x, 2).unwrap();
        let mut grads = Mlp::zeros(&spec);
        block
            .backward_batch(&cache, OutputGrad::Activation(&weights), &mut grads, false)
            .unwrap();
        let analytic: Vec<f64> = grads.params().copied().collect();
        let h = 1e-6;
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = block.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = block.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - a).abs() < 1e-7, "param {k}: fd {fd} vs {a}");
        }
    }
}
