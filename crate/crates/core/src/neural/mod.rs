//! Small dense network stack with tape-based reverse-mode gradients.
//!
//! A [`Mlp`] is a flat list of layers. A training-mode forward pass records
//! each layer's input-side values on a tape; [`Mlp::backward`] walks the tape
//! in reverse with layer-local rules and returns parameter gradients in the
//! same order as [`Mlp::params`].

mod activation;
mod adam;
mod batchnorm;
pub mod checkpoint;
mod dense;

pub use activation::{leaky_relu, DEFAULT_LEAKY_SLOPE};
pub use adam::{adam_step, OptimizerState};
pub use batchnorm::{batchnorm_forward, BatchNormLayer};
pub use dense::{dense_forward, DenseLayer};

use ndarray::Array2;
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use activation::leaky_relu_backward;
use batchnorm::BatchNormCache;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    LeakyRelu { slope: f64 },
}

#[derive(Clone, Debug)]
enum Cache {
    Dense(Array2<f64>),
    BatchNorm(BatchNormCache),
    LeakyRelu(Array2<f64>),
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
    tape: Option<Vec<Cache>>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Self {
        Mlp { layers, tape: None }
    }

    /// `Linear → BatchNorm → LeakyReLU` for each hidden width, then a final
    /// linear layer to `output`.
    pub fn block_stack<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(3 * hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(Layer::Dense(DenseLayer::new(prev, h, rng)));
            layers.push(Layer::BatchNorm(BatchNormLayer::new(h)));
            layers.push(Layer::LeakyRelu { slope });
            prev = h;
        }
        layers.push(Layer::Dense(DenseLayer::new(prev, output, rng)));
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => Some(d.input_dim()),
            Layer::BatchNorm(b) => Some(b.dim()),
            Layer::LeakyRelu { .. } => None,
        })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.output_dim()),
            Layer::BatchNorm(b) => Some(b.dim()),
            Layer::LeakyRelu { .. } => None,
        })
    }

    /// Zeroes the weights and bias of the last dense layer.
    pub fn zero_output_layer(&mut self) {
        if let Some(Layer::Dense(d)) = self
            .layers
            .iter_mut()
            .rev()
            .find(|l| matches!(l, Layer::Dense(_)))
        {
            d.weights.fill(0.0);
            d.bias.fill(0.0);
        }
    }

    /// Training mode records the tape and updates batch-norm running
    /// statistics; evaluation mode is pure and discards any pending tape.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        if mode == Mode::Eval {
            self.tape = None;
            return self.predict(x);
        }
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = match layer {
                Layer::Dense(d) => {
                    let y = d.forward(&cur)?;
                    tape.push(Cache::Dense(cur));
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, cache) = b.forward_train(&cur)?;
                    tape.push(Cache::BatchNorm(cache));
                    y
                }
                Layer::LeakyRelu { slope } => {
                    let y = leaky_relu(&cur, *slope);
                    tape.push(Cache::LeakyRelu(cur));
                    y
                }
            };
        }
        self.tape = Some(tape);
        Ok(cur)
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense(d) => d.forward(&cur)?,
                Layer::BatchNorm(b) => b.forward_eval(&cur)?,
                Layer::LeakyRelu { slope } => leaky_relu(&cur, *slope),
            };
        }
        Ok(cur)
    }

    /// Consumes the tape of the last training-mode forward pass and returns
    /// parameter gradients plus the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<(Vec<Vec<f64>>, Array2<f64>)> {
        let tape = self.tape.take().ok_or(Error::NoForwardPass)?;
        if let Some(out) = self.output_dim() {
            if grad_out.ncols() != out {
                return Err(shape_err(
                    format!("{out} gradient columns"),
                    grad_out.ncols(),
                ));
            }
        }
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(tape.iter()).rev() {
            g = match (layer, cache) {
                (Layer::Dense(d), Cache::Dense(input)) => {
                    let (dw, db, dx) = d.backward(input, &g);
                    grads_rev.push(db.to_vec());
                    grads_rev.push(dw.iter().copied().collect());
                    dx
                }
                (Layer::BatchNorm(b), Cache::BatchNorm(c)) => {
                    let (ds, dsh, dx) = b.backward(c, &g);
                    grads_rev.push(dsh.to_vec());
                    grads_rev.push(ds.to_vec());
                    dx
                }
                (Layer::LeakyRelu { slope }, Cache::LeakyRelu(input)) => {
                    leaky_relu_backward(input, &g, *slope)
                }
                _ => unreachable!("tape recorded by this network"),
            };
        }
        grads_rev.reverse();
        Ok((grads_rev, g))
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    /// Trainable tensors in a fixed order: per dense layer `weights, bias`;
    /// per batch norm `scale, shift`.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::BatchNorm(b) => {
                    out.push(b.scale.as_slice().expect("standard layout"));
                    out.push(b.shift.as_slice().expect("standard layout"));
                }
                Layer::LeakyRelu { .. } => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::BatchNorm(b) => {
                    out.push(b.scale.as_slice_mut().expect("standard layout"));
                    out.push(b.shift.as_slice_mut().expect("standard layout"));
                }
                Layer::LeakyRelu { .. } => {}
            }
        }
        out
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(_) => {
                    out.push(format!("{prefix}.{i}.weights"));
                    out.push(format!("{prefix}.{i}.bias"));
                }
                Layer::BatchNorm(_) => {
                    out.push(format!("{prefix}.{i}.scale"));
                    out.push(format!("{prefix}.{i}.shift"));
                }
                Layer::LeakyRelu { .. } => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// `z = mu + exp(0.5·logvar) ⊙ noise`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(shape_err(
            format!("three vectors of length {}", mu.len()),
            format!("{} and {}", logvar.len(), noise.len()),
        ));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}
