use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::scalar::affine;
use crate::numerics::Scalar;

/// Layer widths `[input, hidden.., output]` of a tanh multilayer perceptron.
///
/// Every layer applies `tanh` except the last one when `linear_head` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub linear_head: bool,
}

/// Where one layer's weight matrix (row-major, `rows × cols`) and bias live in
/// the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub activated: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, linear_head: bool) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        Ok(MlpSpec { widths, linear_head })
    }

    /// `input → hidden.. → output`.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, linear_head: bool) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        MlpSpec { widths, linear_head }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> Vec<LayerSlot> {
        let count = self.widths.len() - 1;
        let mut off = 0;
        (0..count)
            .map(|i| {
                let (cols, rows) = (self.widths[i], self.widths[i + 1]);
                let slot = LayerSlot {
                    weight_offset: off,
                    bias_offset: off + rows * cols,
                    rows,
                    cols,
                    activated: !(self.linear_head && i + 1 == count),
                };
                off += rows * cols + rows;
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform in `±1/√fan_in` for weights and biases alike.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        for slot in self.layers() {
            let bound = 1.0 / (slot.cols as f64).sqrt();
            let end = slot.bias_offset + slot.rows;
            for p in &mut params[slot.weight_offset..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        params
    }
}

/// Network output.
pub fn forward<S: Scalar>(spec: &MlpSpec, params: &[f64], x: &[S]) -> Vec<S> {
    forward_trace(spec, params, x).pop().unwrap()
}

/// Activations of every layer, `acts[0]` being the input.
pub fn forward_trace<S: Scalar>(spec: &MlpSpec, params: &[f64], x: &[S]) -> Vec<Vec<S>> {
    debug_assert_eq!(x.len(), spec.input_dim());
    debug_assert_eq!(params.len(), spec.param_count());
    let mut acts = vec![x.to_vec()];
    for slot in spec.layers() {
        let prev = acts.last().unwrap();
        let out: Vec<S> = (0..slot.rows)
            .map(|r| {
                let w = &params[slot.weight_offset + r * slot.cols..slot.weight_offset + (r + 1) * slot.cols];
                let h = affine(w, prev, params[slot.bias_offset + r]);
                if slot.activated {
                    h.tanh()
                } else {
                    h
                }
            })
            .collect();
        acts.push(out);
    }
    acts
}

/// Vector–Jacobian product `upstreamᵀ · ∂out/∂x` given the activations of a
/// forward pass.
pub fn backprop_input<S: Scalar>(spec: &MlpSpec, params: &[f64], acts: &[Vec<S>], upstream: Vec<S>) -> Vec<S> {
    let mut g = upstream;
    for (i, slot) in spec.layers().iter().enumerate().rev() {
        if slot.activated {
            let y = &acts[i + 1];
            g = g.into_iter().zip(y).map(|(gi, yi)| gi.clone() - gi * yi.square()).collect();
        }
        let mut next = Vec::with_capacity(slot.cols);
        for c in 0..slot.cols {
            let col: Vec<f64> = (0..slot.rows).map(|r| params[slot.weight_offset + r * slot.cols + c]).collect();
            next.push(affine(&col, &g, 0.0));
        }
        g = next;
    }
    g
}

/// An MLP together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Network {
    pub fn new(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::shape(format!("{} parameters for a network needing {}", params.len(), spec.param_count())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::shape("non-finite network parameter"));
        }
        Ok(Network { spec, params })
    }

    pub fn random(spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let params = spec.init(rng);
        Network { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = vec![0.0; spec.param_count()];
        Network { spec, params }
    }

    pub fn forward<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        forward(&self.spec, &self.params, x)
    }
}
