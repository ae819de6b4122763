use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Initial negative slope of every PReLU unit.
pub const PRELU_INIT: f64 = 0.25;

/// Learnable per-channel negative slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct PReluParams<T: Real = f32> {
    pub slopes: Tensor<T>,
}

impl<T: Real> PReluParams<T> {
    pub fn new(channels: usize) -> Self {
        PReluParams {
            slopes: Tensor::full(&[channels], T::lit(PRELU_INIT)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        prelu(x, &self.slopes)
    }
}

fn check<T: Real>(x: &Tensor<T>, slopes: &Tensor<T>) -> Result<usize> {
    let c = x.channels();
    if slopes.shape() != [c] {
        return Err(shape_err!(
            "prelu slopes {:?} do not match {c} channels",
            slopes.shape()
        ));
    }
    Ok(c)
}

pub fn prelu<T: Real>(x: &Tensor<T>, slopes: &Tensor<T>) -> Result<Tensor<T>> {
    let c = check(x, slopes)?;
    let a = slopes.data();
    let mut out = x.clone();
    for px in out.data_mut().chunks_mut(c) {
        for (v, &s) in px.iter_mut().zip(a) {
            if *v < T::zero() {
                *v *= s;
            }
        }
    }
    Ok(out)
}

/// Returns `(d/dx, d/dslopes)`.
pub fn prelu_backward<T: Real>(
    x: &Tensor<T>,
    slopes: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = check(x, slopes)?;
    grad_out.expect_shape(x.shape())?;
    let a = slopes.data();
    let mut gx = grad_out.clone();
    let mut ga = vec![T::zero(); c];
    for (gpx, xpx) in gx.data_mut().chunks_mut(c).zip(x.data().chunks(c)) {
        for ch in 0..c {
            if xpx[ch] < T::zero() {
                ga[ch] += gpx[ch] * xpx[ch];
                gpx[ch] *= a[ch];
            }
        }
    }
    Ok((gx, Tensor::new(&[c], ga)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches() {
        let slopes = Tensor::<f32>::new(&[1], vec![0.1]).unwrap();
        let x = Tensor::new(&[1], vec![3.0]).unwrap();
        assert_eq!(prelu(&x, &slopes).unwrap().data(), &[3.0]);

        let p = PReluParams::<f32>::new(1);
        let x = Tensor::new(&[1], vec![-2.0]).unwrap();
        assert_eq!(p.forward(&x).unwrap().data(), &[-0.5]);
    }

    #[test]
    fn slope_gradient_matches_input() {
        let slopes = Tensor::<f64>::new(&[1], vec![0.25]).unwrap();
        let x = Tensor::new(&[1], vec![-2.0]).unwrap();
        let (_, ga) = prelu_backward(&x, &slopes, &Tensor::full(&[1], 1.0)).unwrap();
        assert_eq!(ga.data(), &[-2.0]);
        let h = 1e-3;
        let f = |a: f64| prelu(&x, &Tensor::new(&[1], vec![a]).unwrap()).unwrap().data()[0];
        let fd = (f(0.25 + h) - f(0.25 - h)) / (2.0 * h);
        assert!((fd - -2.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_channel_count() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(prelu(&x, &Tensor::zeros(&[2])).is_err());
    }
}
