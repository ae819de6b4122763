use super::{split_batch, Real, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Debug)]
pub struct FcGrads<T: Real> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn fc_dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (rows, inner) = split_batch(input.shape(), 1)?;
    if weights.rank() != 2 || weights.shape()[0] != inner[0] {
        return Err(shape_err!(
            "fully connected: input {:?} incompatible with weights {:?}",
            input.shape(),
            weights.shape()
        ));
    }
    Ok((rows, weights.shape()[0], weights.shape()[1]))
}

/// `out[d] = sum_c in[c] * w[c, d] + b[d]`, applied to every leading index.
pub fn fully_connected<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (rows, c, d) = fc_dims(input, weights)?;
    bias.expect_shape(&[d])?;
    let w = weights.data();
    let mut out = Vec::with_capacity(rows * d);
    for x in input.data().chunks(c) {
        let start = out.len();
        out.extend_from_slice(bias.data());
        let acc = &mut out[start..];
        for (ci, &v) in x.iter().enumerate() {
            for (a, &k) in acc.iter_mut().zip(&w[ci * d..(ci + 1) * d]) {
                *a += v * k;
            }
        }
    }
    let mut shape = input.shape()[..input.rank() - 1].to_vec();
    shape.push(d);
    Tensor::new(&shape, out)
}

pub fn fully_connected_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<FcGrads<T>> {
    let (rows, c, d) = fc_dims(input, weights)?;
    if grad_out.len() != rows * d || grad_out.channels() != d {
        return Err(shape_err!(
            "fully connected backward: upstream {:?} does not match output width {d}",
            grad_out.shape()
        ));
    }
    let w = weights.data();
    let mut gin = vec![T::zero(); rows * c];
    let mut gw = vec![T::zero(); c * d];
    let mut gb = vec![T::zero(); d];
    for r in 0..rows {
        let x = &input.data()[r * c..(r + 1) * c];
        let g = &grad_out.data()[r * d..(r + 1) * d];
        for (a, &v) in gb.iter_mut().zip(g) {
            *a += v;
        }
        for ci in 0..c {
            let wr = &w[ci * d..(ci + 1) * d];
            gin[r * c + ci] = wr.iter().zip(g).fold(T::zero(), |s, (&k, &v)| s + k * v);
            for (a, &v) in gw[ci * d..(ci + 1) * d].iter_mut().zip(g) {
                *a += x[ci] * v;
            }
        }
    }
    Ok(FcGrads {
        input: Tensor::new(input.shape(), gin)?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: Tensor::new(&[d], gb)?,
    })
}

/// Mean over the two spatial axes: `[.., H, W, C] -> [.., C]`.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, inner) = split_batch(input.shape(), 3)?;
    let (hw, c) = (inner[0] * inner[1], inner[2]);
    let mut out = Vec::with_capacity(batch * c);
    for b in 0..batch {
        let mut acc = vec![0.0f64; c];
        for px in input.data()[b * hw * c..(b + 1) * hw * c].chunks(c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v.as_f64();
            }
        }
        out.extend(acc.into_iter().map(|a| T::lit(a / hw as f64)));
    }
    let mut shape = input.shape()[..input.rank() - 3].to_vec();
    shape.push(c);
    Tensor::new(&shape, out)
}

/// Spreads `grad_out[.., C]` uniformly over the `[.., H, W, C]` input shape.
pub fn global_avg_pool_backward<T: Real>(input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, inner) = split_batch(input_shape, 3)?;
    let (hw, c) = (inner[0] * inner[1], inner[2]);
    if grad_out.len() != batch * c {
        return Err(shape_err!(
            "pool backward: upstream {:?} vs input {input_shape:?}",
            grad_out.shape()
        ));
    }
    let inv = T::one() / T::lit(hw as f64);
    let mut gin = Vec::with_capacity(batch * hw * c);
    for b in 0..batch {
        let g = &grad_out.data()[b * c..(b + 1) * c];
        for _ in 0..hw {
            gin.extend(g.iter().map(|&v| v * inv));
        }
    }
    Tensor::new(input_shape, gin)
}
