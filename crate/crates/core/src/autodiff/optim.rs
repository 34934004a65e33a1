//! Adam with bias correction, and the warmup + cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with standard coefficients (0.9, 0.999, 1e-8).
    pub fn new(param_shapes: &[(usize, usize)]) -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: param_shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: param_shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&Tensor]) -> Self {
        let shapes: Vec<_> = params.iter().map(|t| t.shape()).collect();
        Self::new(&shapes)
    }
}

/// One Adam update over a parameter list; `grads[i]` pairs with `params[i]`.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), AutodiffError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AutodiffError::ShapeMismatch {
            context: "adam parameter count",
            expected: state.m.len(),
            got: params.len(),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params[i].shape() {
            return Err(AutodiffError::ShapeMismatch {
                context: "adam gradient shape",
                expected: params[i].len(),
                got: g.len(),
            });
        }
        if !g.all_finite() {
            return Err(AutodiffError::NonFiniteGradient { param_index: i });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        let g = grads[i].data();
        for k in 0..p.len() {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Linear warmup to `base_lr`, then cosine decay to `alpha * base_lr`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Floor fraction of the cosine decay, in [0, 1].
    pub alpha: f64,
}

pub fn lr_at(schedule: &LrSchedule, step: u64) -> f64 {
    let s = &schedule;
    if s.warmup_steps > 0 && step < s.warmup_steps {
        return s.base_lr * step as f64 / s.warmup_steps as f64;
    }
    let denom = s.total_steps.saturating_sub(s.warmup_steps);
    let progress = if denom == 0 {
        1.0
    } else {
        ((step - s.warmup_steps) as f64 / denom as f64).clamp(0.0, 1.0)
    };
    s.base_lr * (s.alpha + (1.0 - s.alpha) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
