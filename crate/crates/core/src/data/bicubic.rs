//! Separable bicubic resampling with the kernel widened by the downscale
//! factor, so downsampling also low-pass filters.
//!
//! Follows the common image-library convention: half-pixel centres, taps
//! outside the image dropped and the remaining weights renormalized, the
//! horizontal pass applied before the vertical one.

use crate::error::{GrrnError, Result};
use crate::tensor::{split_batch, Tensor};

pub const BICUBIC_A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Per output index: first source index and normalized weights.
fn coefficients(in_size: usize, out_size: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = in_size as f64 / out_size as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    (0..out_size)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support + 0.5).floor().max(0.0)) as usize;
            let hi = ((center + support + 0.5).floor() as usize).min(in_size);
            let mut w: Vec<f64> = (lo..hi)
                .map(|i| cubic((i as f64 - center + 0.5) / filter_scale))
                .collect();
            let total: f64 = w.iter().sum();
            if total != 0.0 {
                w.iter_mut().for_each(|v| *v /= total);
            }
            (lo, w)
        })
        .collect()
}

/// Resize `[.., H, W, C]` to `[.., out_h, out_w, C]`. No quantization.
pub fn resize_bicubic(x: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (batch, inner) = split_batch(x.shape(), 3)?;
    let (h, w, c) = (inner[0], inner[1], inner[2]);
    if out_h == 0 || out_w == 0 {
        return Err(GrrnError::Validation("resize target must be non-empty".into()));
    }
    let cx = coefficients(w, out_w);
    let cy = coefficients(h, out_h);
    let src = x.data();
    let mut out = Vec::with_capacity(batch * out_h * out_w * c);
    let mut tmp = vec![0.0f64; h * out_w * c];
    for b in 0..batch {
        let img = &src[b * h * w * c..(b + 1) * h * w * c];
        for y in 0..h {
            for (ox, (lo, ws)) in cx.iter().enumerate() {
                let dst = &mut tmp[(y * out_w + ox) * c..(y * out_w + ox + 1) * c];
                dst.iter_mut().for_each(|v| *v = 0.0);
                for (k, &wk) in ws.iter().enumerate() {
                    let px = &img[(y * w + lo + k) * c..(y * w + lo + k + 1) * c];
                    for (d, &s) in dst.iter_mut().zip(px) {
                        *d += wk * f64::from(s);
                    }
                }
            }
        }
        for (lo, ws) in &cy {
            for ox in 0..out_w {
                for ch in 0..c {
                    let v: f64 = ws
                        .iter()
                        .enumerate()
                        .map(|(k, &wk)| wk * tmp[((lo + k) * out_w + ox) * c + ch])
                        .sum();
                    out.push(v as f32);
                }
            }
        }
    }
    let mut shape = x.shape()[..x.rank() - 3].to_vec();
    shape.extend_from_slice(&[out_h, out_w, c]);
    Tensor::new(&shape, out)
}

/// Downscale `[.., rH, rW, C]` by the integer factor `r`.
pub fn bicubic_downsample(hr: &Tensor<f32>, r: usize) -> Result<Tensor<f32>> {
    let (_, inner) = split_batch(hr.shape(), 3)?;
    if r == 0 || inner[0] % r != 0 || inner[1] % r != 0 {
        return Err(GrrnError::Validation(format!(
            "{}x{} is not divisible by scale {r}",
            inner[0], inner[1]
        )));
    }
    resize_bicubic(hr, inner[0] / r, inner[1] / r)
}

/// Upscale `[.., H, W, C]` by the integer factor `r`.
pub fn bicubic_upsample(lr: &Tensor<f32>, r: usize) -> Result<Tensor<f32>> {
    let (_, inner) = split_batch(lr.shape(), 3)?;
    resize_bicubic(lr, inner[0] * r, inner[1] * r)
}
