use std::fmt::Write as _;
use std::path::Path;

use super::quality::{format_psnr, score, Channel, ScorePair};
use super::upscale::{Tta, Upscaler};
use crate::data::{load_clip, DatasetManifest, VideoClip};
use crate::error::{GrrnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClipScore {
    pub clip_id: String,
    pub sequence: String,
    pub score: ScorePair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub channel: Channel,
    pub clips: Vec<ClipScore>,
    /// In order of first appearance.
    pub sequences: Vec<(String, ScorePair)>,
    pub mean: ScorePair,
}

fn mean_of<'a>(scores: impl Iterator<Item = &'a ScorePair>) -> ScorePair {
    let (mut p, mut s, mut n) = (0.0, 0.0, 0usize);
    for sc in scores {
        p += sc.psnr;
        s += sc.ssim;
        n += 1;
    }
    ScorePair {
        psnr: p / n as f64,
        ssim: s / n as f64,
    }
}

impl EvalReport {
    pub fn from_clips(method: impl Into<String>, channel: Channel, clips: Vec<ClipScore>) -> Result<Self> {
        if clips.is_empty() {
            return Err(GrrnError::Validation("nothing to evaluate".into()));
        }
        let mut names: Vec<String> = Vec::new();
        for c in &clips {
            if !names.contains(&c.sequence) {
                names.push(c.sequence.clone());
            }
        }
        let sequences = names
            .into_iter()
            .map(|n| {
                let m = mean_of(clips.iter().filter(|c| c.sequence == n).map(|c| &c.score));
                (n, m)
            })
            .collect();
        let mean = mean_of(clips.iter().map(|c| &c.score));
        Ok(EvalReport {
            method: method.into(),
            channel,
            clips,
            sequences,
            mean,
        })
    }

    /// Aligned text table: one row per sequence, then the overall mean.
    pub fn to_text(&self) -> String {
        let width = self
            .sequences
            .iter()
            .map(|(n, _)| n.len())
            .chain([8])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = writeln!(out, "method: {}  channel: {}  clips: {}", self.method, self.channel.name(), self.clips.len());
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>7}", "sequence", "PSNR(dB)", "SSIM");
        for (name, s) in &self.sequences {
            let _ = writeln!(out, "{:<width$}  {:>9}  {:>7.4}", name, format_psnr(s.psnr), s.ssim);
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>7.4}",
            "average",
            format_psnr(self.mean.psnr),
            self.mean.ssim
        );
        out
    }

    /// `clip_id,psnr_db,ssim`; infinite PSNR is an empty cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("clip_id,psnr_db,ssim\n");
        for c in &self.clips {
            let p = if c.score.psnr.is_finite() {
                format!("{:.6}", c.score.psnr)
            } else {
                String::new()
            };
            let _ = writeln!(out, "{},{},{:.6}", c.clip_id, p, c.score.ssim);
        }
        out
    }

    pub fn write(&self, text_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(text_path, self.to_text()).map_err(|e| GrrnError::io(text_path, e))?;
        std::fs::write(csv_path, self.to_csv()).map_err(|e| GrrnError::io(csv_path, e))
    }
}

/// Score every clip of a manifest in order with an arbitrary predictor.
pub fn evaluate_with(
    manifest: &DatasetManifest,
    radius: usize,
    scale: usize,
    channel: Channel,
    method: &str,
    mut predict: impl FnMut(&VideoClip) -> Result<crate::tensor::Tensor<f32>>,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(GrrnError::Validation("manifest is empty".into()));
    }
    let mut clips = Vec::with_capacity(manifest.len());
    for i in 0..manifest.len() {
        let clip = load_clip(manifest, i, radius, scale)?;
        let pred = predict(&clip)?;
        clips.push(ClipScore {
            clip_id: clip.clip_id.clone(),
            sequence: manifest.sequence_of(i),
            score: score(&pred, &clip.hr_target, channel)?,
        });
    }
    EvalReport::from_clips(method, channel, clips)
}

pub fn evaluate<U: Upscaler + ?Sized>(
    model: &U,
    manifest: &DatasetManifest,
    use_tta: bool,
    channel: Channel,
) -> Result<EvalReport> {
    if use_tta {
        let t = Tta(model);
        evaluate_with(manifest, t.radius(), t.scale(), channel, &t.name(), |c| t.upscale(&c.lr_frames))
    } else {
        evaluate_with(manifest, model.radius(), model.scale(), channel, &model.name(), |c| {
            model.upscale(&c.lr_frames)
        })
    }
}
