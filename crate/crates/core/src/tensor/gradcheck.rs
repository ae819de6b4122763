//! Central finite differences for checking hand-written backward passes.

use super::{Real, Tensor};

/// Default step on inputs of unit scale.
pub const DEFAULT_STEP: f64 = 1e-3;

/// `sum(y * w)` accumulated in f64. Using a random `w` as the upstream
/// gradient turns any tensor-valued op into a scalar loss.
pub fn project<T: Real>(y: &Tensor<T>, w: &Tensor<T>) -> f64 {
    assert_eq!(y.shape(), w.shape(), "projection shape mismatch");
    y.data()
        .iter()
        .zip(w.data())
        .map(|(&a, &b)| a.as_f64() * b.as_f64())
        .sum()
}

/// Central-difference derivative of `f` with respect to the listed entries of `x`.
pub fn numeric_gradient_at<T: Real>(
    x: &Tensor<T>,
    indices: &[usize],
    step: f64,
    mut f: impl FnMut(&Tensor<T>) -> f64,
) -> Vec<f64> {
    let mut probe = x.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = T::lit(orig.as_f64() + step);
            let plus = f(&probe);
            probe.data_mut()[i] = T::lit(orig.as_f64() - step);
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Full central-difference gradient of `f` at `x`.
pub fn numeric_gradient<T: Real>(x: &Tensor<T>, step: f64, f: impl FnMut(&Tensor<T>) -> f64) -> Tensor<T> {
    let idx: Vec<usize> = (0..x.len()).collect();
    let g = numeric_gradient_at(x, &idx, step, f);
    Tensor::from_fn(x.shape(), |i| T::lit(g[i]))
}

/// Max absolute deviation normalised by the larger of the two gradients'
/// max-norms (never below `floor`).
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(floor, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Relative error between an analytic gradient tensor and a full numeric one.
pub fn tensor_relative_error<T: Real>(analytic: &Tensor<T>, numeric: &Tensor<T>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let a: Vec<f64> = analytic.data().iter().map(|v| v.as_f64()).collect();
    let n: Vec<f64> = numeric.data().iter().map(|v| v.as_f64()).collect();
    relative_error(&a, &n, floor)
}
