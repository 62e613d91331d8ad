//! Adam with bias correction plus global-norm gradient clipping.

use super::tensor::{Scalar, Tensor2};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, aligned index-for-index with the
/// parameter list they were created from.
pub struct AdamState<F: Scalar> {
    m: Vec<Tensor2<F>>,
    v: Vec<Tensor2<F>>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &[Tensor2<F>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Rebuilds state from checkpointed moment tensors.
    pub fn from_parts(m: Vec<Tensor2<F>>, v: Vec<Tensor2<F>>, step: u64) -> Self {
        assert_eq!(m.len(), v.len(), "moment lists must align");
        AdamState { m, v, step }
    }

    pub fn moments(&self) -> (&[Tensor2<F>], &[Tensor2<F>]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<F: Scalar>(
    params: &mut [Tensor2<F>],
    grads: &[Tensor2<F>],
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "params/grads must align");
    assert_eq!(params.len(), state.m.len(), "params/state must align");
    state.step += 1;
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let eps = F::from_f64(cfg.eps);
    let one = F::one();
    // Fold both bias corrections into the step size.
    let corr = cfg.lr * (1.0 - cfg.beta2.powi(state.step as i32)).sqrt()
        / (1.0 - cfg.beta1.powi(state.step as i32));
    let lr_t = F::from_f64(corr);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape(), g.shape(), "param/grad shape mismatch");
        for ((pi, &gi), (mi, vi)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data().iter())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            *pi = *pi - lr_t * *mi / (vi.sqrt() + eps);
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<F: Scalar>(grads: &mut [Tensor2<F>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for &x in g.data() {
            let x = x.to_f64();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = F::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x = *x * k;
            }
        }
    }
    norm
}
