//! Central finite-difference probes for checking analytic gradients.

use crate::engine::Tensor;

/// Denominator floor for [`relative_error`], so that gradients which are
/// zero up to rounding compare by absolute difference instead.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for coordinate `i`.
pub fn central_difference<F>(f: &mut F, x: &Tensor, i: usize, h: f64) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let orig = probe.data()[i];
    probe.data_mut()[i] = orig + h;
    let plus = f(&probe);
    probe.data_mut()[i] = orig - h;
    let minus = f(&probe);
    (plus - minus) / (2.0 * h)
}

/// Full finite-difference gradient of `f` at `x`.
pub fn numeric_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let data = (0..x.numel()).map(|i| central_difference(&mut f, x, i, h)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape as x")
}

/// Largest [`relative_error`] between two gradients of the same shape.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_derivative_of_cubic() {
        let x = Tensor::vector(&[0.5, -2.0]);
        let g = numeric_gradient(|t| t.data().iter().map(|v| v * v * v).sum(), &x, 1e-5);
        assert!((g.data()[0] - 0.75).abs() < 1e-8);
        assert!((g.data()[1] - 12.0).abs() < 1e-8);
    }
}
