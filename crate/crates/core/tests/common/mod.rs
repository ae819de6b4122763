//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use grrn::data::{bicubic_downsample, quantize_tensor, synthetic_clip, VideoClip};
use grrn::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    Tensor::random_uniform(&[h, w, 3], 0.0, 255.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `count` synthetic clips with `hr x hr` targets and bicubic LR frames at `scale`.
pub fn synthetic_clips(count: usize, hr: usize, scale: usize, seed: u64) -> Vec<VideoClip> {
    (0..count)
        .map(|i| {
            let frames = synthetic_clip(i, hr, hr, seed);
            let lr = frames
                .iter()
                .map(|f| quantize_tensor(&bicubic_downsample(f, scale).unwrap()))
                .collect();
            VideoClip::new(lr, frames[3].clone(), format!("c{i}"), scale).unwrap()
        })
        .collect()
}

/// SSIM computed window by window with a 2-D Gaussian and no separability.
pub fn naive_ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let luma = |t: &Tensor<f32>, y: usize, x: usize| {
        (0.299 * t.at(&[y, x, 0]) as f64 + 0.587 * t.at(&[y, x, 1]) as f64 + 0.114 * t.at(&[y, x, 2]) as f64) / 255.0
    };
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let mut weights = vec![0.0; 121];
    for i in 0..11 {
        for j in 0..11 {
            weights[i * 11 + j] = g[i] * g[j];
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    ma += weights[i * 11 + j] * luma(a, y0 + i, x0 + j);
                    mb += weights[i * 11 + j] * luma(b, y0 + i, x0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let da = luma(a, y0 + i, x0 + j) - ma;
                    let db = luma(b, y0 + i, x0 + j) - mb;
                    va += weights[i * 11 + j] * da * da;
                    vb += weights[i * 11 + j] * db * db;
                    cov += weights[i * 11 + j] * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
