use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

pub const CHARBONNIER_EPSILON: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct LossValue<T: Real = f32> {
    pub value: f64,
    /// d(value)/d(pred), same shape as the prediction.
    pub grad: Tensor<T>,
}

/// Mean of `sqrt((pred - target)² + ε²)`.
pub fn charbonnier_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, epsilon: f64) -> Result<LossValue<T>> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "loss operands differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    if epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(shape_err!("charbonnier epsilon must be positive, got {epsilon}"));
    }
    let n = pred.len() as f64;
    let eps2 = epsilon * epsilon;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.as_f64() - t.as_f64();
        let s = (d * d + eps2).sqrt();
        total += s;
        grad.push(T::lit(d / s / n));
    }
    Ok(LossValue {
        value: total / n,
        grad: Tensor::new(pred.shape(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_give_epsilon() {
        let a = Tensor::<f32>::full(&[4, 4, 3], 0.3);
        let l = charbonnier_loss(&a, &a, 1e-3).unwrap();
        assert!((l.value - 1e-3).abs() < 1e-15);
        assert!(l.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_difference() {
        let p = Tensor::<f64>::new(&[1], vec![1.0]).unwrap();
        let t = Tensor::new(&[1], vec![0.0]).unwrap();
        let l = charbonnier_loss(&p, &t, 1e-3).unwrap();
        assert!((l.value - (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!((l.value - 1.0000005).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f32>::zeros(&[2]);
        let b = Tensor::<f32>::zeros(&[3]);
        assert!(charbonnier_loss(&a, &b, 1e-3).is_err());
        assert!(charbonnier_loss(&a, &a, 0.0).is_err());
    }
}
