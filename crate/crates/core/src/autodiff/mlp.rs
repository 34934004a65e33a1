//! Plain fully-connected networks with an optional input skip connection.

use serde::{Deserialize, Serialize};

use super::tape::{gelu, sigmoid, softplus_beta, NodeId, Tape};
use super::tensor::{matmul, Tensor};
use super::AutodiffError;

/// Sharpness of the softplus activation; near-ReLU but smooth, which the
/// geometric sphere initialization of the SDF network relies on.
pub const SOFTPLUS_BETA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Gelu,
    Relu,
    Softplus,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `(in, out)` weight matrix; inputs are row vectors.
    pub weight: Tensor,
    /// `(1, out)` bias.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    /// Re-concatenate the network input before this layer index.
    pub skip_at: Option<usize>,
}

impl MlpParams {
    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

fn apply_activation_tape(tape: &mut Tape, h: NodeId, act: Activation) -> NodeId {
    match act {
        Activation::Gelu => tape.gelu(h),
        Activation::Relu => tape.relu(h),
        Activation::Softplus => tape.softplus_beta(h, SOFTPLUS_BETA),
        Activation::None => h,
    }
}

fn apply_activation_pure(h: &Tensor, act: Activation) -> Tensor {
    match act {
        Activation::Gelu => h.map(gelu),
        Activation::Relu => h.map(|x| x.max(0.0)),
        Activation::Softplus => h.map(|x| softplus_beta(x, SOFTPLUS_BETA)),
        Activation::None => h.clone(),
    }
}

/// Forward pass recorded on the tape. `param_nodes` must contain one var node
/// per layer tensor in `params()` order (weight, bias, weight, bias, ...).
pub fn mlp_forward(
    tape: &mut Tape,
    params: &MlpParams,
    param_nodes: &[NodeId],
    input: NodeId,
) -> Result<NodeId, AutodiffError> {
    let in_dim = params.in_dim();
    let got = tape.value(input).cols();
    if got != in_dim {
        return Err(AutodiffError::ShapeMismatch {
            context: "mlp input",
            expected: in_dim,
            got,
        });
    }
    assert_eq!(param_nodes.len(), params.layers.len() * 2, "one node per tensor");
    let last = params.layers.len() - 1;
    let mut h = input;
    for (i, _) in params.layers.iter().enumerate() {
        if params.skip_at == Some(i) {
            h = tape.concat_cols(h, input);
        }
        let w = param_nodes[2 * i];
        let b = param_nodes[2 * i + 1];
        let lin = tape.matmul(h, w);
        h = tape.add_row_broadcast(lin, b);
        if i < last {
            h = apply_activation_tape(tape, h, params.activation);
        }
    }
    Ok(h)
}

/// Forward pass without a tape, for inference-only paths (grid evaluation,
/// debug renders, sphere tracing).
pub fn mlp_forward_pure(params: &MlpParams, input: &Tensor) -> Result<Tensor, AutodiffError> {
    let in_dim = params.in_dim();
    if input.cols() != in_dim {
        return Err(AutodiffError::ShapeMismatch {
            context: "mlp input",
            expected: in_dim,
            got: input.cols(),
        });
    }
    let last = params.layers.len() - 1;
    let mut h = input.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        if params.skip_at == Some(i) {
            let (m, na) = h.shape();
            let nb = input.cols();
            h = Tensor::from_fn(m, na + nb, |r, c| {
                if c < na {
                    h.get(r, c)
                } else {
                    input.get(r, c - na)
                }
            });
        }
        let mut lin = matmul(&h, &layer.weight);
        for r in 0..lin.rows() {
            for c in 0..lin.cols() {
                let v = lin.get(r, c) + layer.bias.get(0, c);
                lin.set(r, c, v);
            }
        }
        h = if i < last {
            apply_activation_pure(&lin, params.activation)
        } else {
            lin
        };
    }
    Ok(h)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}
