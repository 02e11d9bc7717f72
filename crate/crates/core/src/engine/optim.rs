use super::{EngineError, Tensor};

/// Plain SGD: `w <- w - lr * g`, applied in slice order.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<(), EngineError> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(EngineError::InvalidLearningRate(lr));
    }
    if params.len() != grads.len() {
        return Err(EngineError::ShapeMismatch {
            op: "sgd_step",
            expected: vec![params.len()],
            found: vec![grads.len()],
        });
    }
    for (w, g) in params.iter().zip(grads) {
        if w.shape() != g.shape() {
            return Err(EngineError::ShapeMismatch {
                op: "sgd_step",
                expected: w.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
    }
    for (w, g) in params.iter_mut().zip(grads) {
        for (w, g) in w.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * g;
        }
    }
    Ok(())
}

/// Adam moment decay rates and denominator guard.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Tensor,
    pub v: Tensor,
    pub steps: u64,
}

impl AdamMoments {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { m: Tensor::zeros(shape), v: Tensor::zeros(shape), steps: 0 }
    }
}

/// One bias-corrected Adam step on `w`.
pub fn adam_step(w: &mut Tensor, g: &Tensor, state: &mut AdamMoments, lr: f64, cfg: AdamConfig) -> Result<(), EngineError> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(EngineError::InvalidLearningRate(lr));
    }
    for other in [g.shape(), state.m.shape()] {
        if w.shape() != other {
            return Err(EngineError::ShapeMismatch { op: "adam_step", expected: w.shape().to_vec(), found: other.to_vec() });
        }
    }
    state.steps += 1;
    let c1 = 1.0 - cfg.beta1.powf(state.steps as f64);
    let c2 = 1.0 - cfg.beta2.powf(state.steps as f64);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, (w, &g)) in w.data_mut().iter_mut().zip(g.data()).enumerate() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
    }
    Ok(())
}
