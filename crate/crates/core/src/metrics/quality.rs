use std::fmt;

use crate::error::{shape_err, GrrnError, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Which signal the scores are computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Channel {
    /// `Y = 0.299 R + 0.587 G + 0.114 B` on the full `[0, 1]` range.
    #[default]
    Luma,
    /// Studio-swing `Y` in `[16/255, 235/255]`.
    LumaStudio,
    /// All three colour channels.
    Rgb,
}

impl Channel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "y" | "luma" => Ok(Channel::Luma),
            "y-studio" | "luma-studio" => Ok(Channel::LumaStudio),
            "rgb" => Ok(Channel::Rgb),
            _ => Err(GrrnError::Config(format!("unknown metric channel {s:?} (luma, luma-studio, rgb)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Luma => "luma",
            Channel::LumaStudio => "luma-studio",
            Channel::Rgb => "rgb",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScorePair {
    /// dB; `+inf` for identical images.
    pub psnr: f64,
    pub ssim: f64,
}

impl fmt::Display for ScorePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {:.4}", format_psnr(self.psnr), self.ssim)
    }
}

pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

/// Planes of `[H, W, 3]` values in `0..=255`, rescaled to `[0, 1]`.
fn planes(img: &Tensor<f32>, channel: Channel) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let s = img.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(shape_err!("expected an [H, W, 3] image, got {s:?}"));
    }
    let px = img.data().chunks(3).map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]);
    let planes = match channel {
        Channel::Luma => vec![px.map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b).collect()],
        Channel::LumaStudio => vec![px
            .map(|[r, g, b]| (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0)
            .collect()],
        Channel::Rgb => {
            let all: Vec<[f64; 3]> = px.collect();
            (0..3).map(|c| all.iter().map(|p| p[c]).collect()).collect()
        }
    };
    Ok((s[0], s[1], planes))
}

fn check_pair(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("cannot compare images {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` on `[0, 1]` values.
pub fn psnr_with(a: &Tensor<f32>, b: &Tensor<f32>, channel: Channel) -> Result<f64> {
    check_pair(a, b)?;
    let (_, _, pa) = planes(a, channel)?;
    let (_, _, pb) = planes(b, channel)?;
    let n: usize = pa.iter().map(Vec::len).sum();
    let se: f64 = pa
        .iter()
        .zip(&pb)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)))
        .sum();
    let mse = se / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    psnr_with(a, b, Channel::Luma)
}

pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable valid-mode filtering of one plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            rows[y * wo + xo] = (0..SSIM_WINDOW).map(|i| k[i] * x[y * w + xo + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            out[yo * wo + xo] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(yo + i) * wo + xo]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let e_aa = filter_valid(&prod(a, a), h, w, &k);
    let e_bb = filter_valid(&prod(b, b), h, w, &k);
    let e_ab = filter_valid(&prod(a, b), h, w, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean local SSIM over all fully contained 11x11 Gaussian windows.
pub fn ssim_with(a: &Tensor<f32>, b: &Tensor<f32>, channel: Channel) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w, pa) = planes(a, channel)?;
    let (_, _, pb) = planes(b, channel)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"));
    }
    let total: f64 = pa.iter().zip(&pb).map(|(x, y)| ssim_plane(x, y, h, w)).sum();
    Ok(total / pa.len() as f64)
}

pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    ssim_with(a, b, Channel::Luma)
}

pub fn score(pred: &Tensor<f32>, target: &Tensor<f32>, channel: Channel) -> Result<ScorePair> {
    Ok(ScorePair {
        psnr: psnr_with(pred, target, channel)?,
        ssim: ssim_with(pred, target, channel)?,
    })
}
