use crate::error::{shape_err, Result};
use crate::tensor::{split_batch, Real, Tensor};

/// Rearranges `[.., H, W, r²·C]` into `[.., rH, rW, C]`.
///
/// For colour `c`: `out[r*x + l, r*y + k, c] = z[x, y, c*r² + r*l + k]`.
pub fn pixel_shuffle<T: Real>(z: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (batch, inner) = split_batch(z.shape(), 3)?;
    let (h, w, cz) = (inner[0], inner[1], inner[2]);
    let rr = r * r;
    if r == 0 || cz % rr != 0 {
        return Err(shape_err!("{cz} channels not divisible by r^2 = {rr}"));
    }
    let c = cz / rr;
    let (ho, wo) = (h * r, w * r);
    let src = z.data();
    let mut out = vec![T::zero(); z.len()];
    for b in 0..batch {
        for x in 0..h {
            for y in 0..w {
                let zi = ((b * h + x) * w + y) * cz;
                for l in 0..r {
                    for k in 0..r {
                        let oi = ((b * ho + r * x + l) * wo + r * y + k) * c;
                        for ch in 0..c {
                            out[oi + ch] = src[zi + ch * rr + r * l + k];
                        }
                    }
                }
            }
        }
    }
    let mut shape = z.shape()[..z.rank() - 3].to_vec();
    shape.extend_from_slice(&[ho, wo, c]);
    Tensor::new(&shape, out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Real>(res: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (batch, inner) = split_batch(res.shape(), 3)?;
    let (ho, wo, c) = (inner[0], inner[1], inner[2]);
    if r == 0 || ho % r != 0 || wo % r != 0 {
        return Err(shape_err!("{ho}x{wo} not divisible by {r}"));
    }
    let rr = r * r;
    let (h, w, cz) = (ho / r, wo / r, c * rr);
    let src = res.data();
    let mut out = vec![T::zero(); res.len()];
    for b in 0..batch {
        for x in 0..h {
            for y in 0..w {
                let zi = ((b * h + x) * w + y) * cz;
                for l in 0..r {
                    for k in 0..r {
                        let oi = ((b * ho + r * x + l) * wo + r * y + k) * c;
                        for ch in 0..c {
                            out[zi + ch * rr + r * l + k] = src[oi + ch];
                        }
                    }
                }
            }
        }
    }
    let mut shape = res.shape()[..res.rank() - 3].to_vec();
    shape.extend_from_slice(&[h, w, cz]);
    Tensor::new(&shape, out)
}
