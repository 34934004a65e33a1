//! Central finite-difference gradient checking, kept independent of the tape
//! so it can serve as the oracle for every differentiable operation.

use super::tensor::Tensor;

/// Central finite differences of `f` w.r.t. each parameter tensor.
pub fn numeric_gradient(
    f: &mut dyn FnMut(&[Tensor]) -> f64,
    params: &[Tensor],
    h: f64,
) -> Vec<Tensor> {
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let (r, c) = params[pi].shape();
        let mut g = Tensor::zeros(r, c);
        for k in 0..params[pi].len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let fp = f(&work);
            work[pi].data_mut()[k] = orig - h;
            let fm = f(&work);
            work[pi].data_mut()[k] = orig;
            g.data_mut()[k] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Worst relative disagreement between analytic and numeric gradients:
/// `max_i |a_i - n_i| / (max(|a_i|, |n_i|) + floor)`.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        assert_eq!(a.shape(), n.shape(), "gradient shape mismatch");
        for (x, y) in a.data().iter().zip(n.data().iter()) {
            let rel = (x - y).abs() / (x.abs().max(y.abs()) + floor);
            worst = worst.max(rel);
        }
    }
    worst
}
