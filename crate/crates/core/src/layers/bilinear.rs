use crate::error::{shape_err, Result};
use crate::tensor::{split_batch, Real, Tensor};

/// Source taps `(i0, i1, frac)` for each output coordinate, half-pixel
/// centres (align-corners false) with edge clamping.
fn taps(extent: usize, r: usize) -> Vec<(usize, usize, f64)> {
    (0..extent * r)
        .map(|o| {
            let src = ((o as f64 + 0.5) / r as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(extent - 1);
            let i1 = (i0 + 1).min(extent - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling of `[.., H, W, C]` by an integer factor.
pub fn bilinear_upsample<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if r == 0 {
        return Err(shape_err!("upsampling factor must be at least 1"));
    }
    let (batch, inner) = split_batch(x.shape(), 3)?;
    let (h, w, c) = (inner[0], inner[1], inner[2]);
    let ty = taps(h, r);
    let tx = taps(w, r);
    let (ho, wo) = (h * r, w * r);
    let src = x.data();
    let mut out = Vec::with_capacity(batch * ho * wo * c);
    for b in 0..batch {
        let base = b * h * w * c;
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let p = |y: usize, x: usize, ch: usize| src[base + (y * w + x) * c + ch].as_f64();
                for ch in 0..c {
                    let top = p(y0, x0, ch) * (1.0 - fx) + p(y0, x1, ch) * fx;
                    let bot = p(y1, x0, ch) * (1.0 - fx) + p(y1, x1, ch) * fx;
                    out.push(T::lit(top * (1.0 - fy) + bot * fy));
                }
            }
        }
    }
    let mut shape = x.shape()[..x.rank() - 3].to_vec();
    shape.extend_from_slice(&[ho, wo, c]);
    Tensor::new(&shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_stay_constant() {
        for r in 1..=4 {
            let x = Tensor::<f32>::full(&[3, 5, 2], 17.25);
            let y = bilinear_upsample(&x, r).unwrap();
            assert_eq!(y.shape(), &[3 * r, 5 * r, 2]);
            assert!(y.data().iter().all(|&v| v == 17.25));
        }
    }

    #[test]
    fn vimeo_extent() {
        let x = Tensor::<f32>::zeros(&[64, 112, 3]);
        assert_eq!(bilinear_upsample(&x, 4).unwrap().shape(), &[256, 448, 3]);
    }

    #[test]
    fn ramp_reproduced_in_interior() {
        // f(x) = 3x + 1 on a 1x8 row; output centre u maps to source (u + 0.5)/r - 0.5
        let w = 8;
        let r = 4;
        let x = Tensor::<f64>::from_fn(&[1, w, 1], |i| 3.0 * i as f64 + 1.0);
        let y = bilinear_upsample(&x, r).unwrap();
        for u in 2..(w * r - 2) {
            let src = (u as f64 + 0.5) / r as f64 - 0.5;
            let expected = 3.0 * src + 1.0;
            assert!((y.at(&[0, u, 0]) - expected).abs() < 1e-12, "u={u}");
        }
        // edges clamp
        assert_eq!(y.at(&[0, 0, 0]), 1.0);
        assert_eq!(y.at(&[0, w * r - 1, 0]), 3.0 * (w - 1) as f64 + 1.0);
    }
}
