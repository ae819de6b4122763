//! Procedural septuplet clips for desk-scale experiments.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bicubic::bicubic_downsample;
use super::clip::{DatasetLayout, DatasetManifest, Split, SEPTUPLET_LEN};
use super::image_io::{quantize_tensor, write_rgb};
use crate::error::{GrrnError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// A tilted colour ramp with a slow ripple, drifting.
    Gradient,
    /// Superposed sinusoidal gratings with sub-pixel motion.
    Texture,
    /// Soft-edged discs translating over a ramp.
    Shapes,
}

impl Pattern {
    pub fn of_clip(index: usize) -> Self {
        [Pattern::Gradient, Pattern::Texture, Pattern::Shapes][index % 3]
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

struct Disc {
    x: f64,
    y: f64,
    radius: f64,
    color: [f64; 3],
    vx: f64,
    vy: f64,
}

enum Scene {
    Gradient { dir: (f64, f64), slope: [f64; 3], base: [f64; 3], ripple: Wave, v: (f64, f64) },
    Texture { base: [f64; 3], waves: Vec<Wave>, v: (f64, f64) },
    Shapes { base: [f64; 3], slope: [f64; 3], discs: Vec<Disc> },
}

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)]
}

fn velocity(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.gen_range(-1.25..1.25), rng.gen_range(-1.25..1.25))
}

fn wave(rng: &mut ChaCha8Rng, amp: f64) -> Wave {
    let f = rng.gen_range(0.03..0.09);
    let theta = rng.gen_range(0.0..TAU);
    Wave {
        fx: f * theta.cos(),
        fy: f * theta.sin(),
        phase: rng.gen_range(0.0..TAU),
        amp: color(rng, 0.3 * amp, amp),
    }
}

impl Scene {
    fn sample(pattern: Pattern, size: f64, rng: &mut ChaCha8Rng) -> Self {
        match pattern {
            Pattern::Gradient => {
                let theta = rng.gen_range(0.0..TAU);
                Scene::Gradient {
                    dir: (theta.cos(), theta.sin()),
                    slope: color(rng, 40.0, 90.0).map(|s| s / size),
                    base: color(rng, 90.0, 160.0),
                    ripple: wave(rng, 25.0),
                    v: velocity(rng),
                }
            }
            Pattern::Texture => Scene::Texture {
                base: color(rng, 100.0, 150.0),
                waves: (0..3).map(|_| wave(rng, 30.0)).collect(),
                v: velocity(rng),
            },
            Pattern::Shapes => Scene::Shapes {
                base: color(rng, 60.0, 120.0),
                slope: color(rng, 10.0, 40.0).map(|s| s / size),
                discs: (0..3)
                    .map(|_| {
                        let (vx, vy) = velocity(rng);
                        Disc {
                            x: rng.gen_range(0.2..0.8) * size,
                            y: rng.gen_range(0.2..0.8) * size,
                            radius: rng.gen_range(0.12..0.25) * size,
                            color: color(rng, 20.0, 235.0),
                            vx,
                            vy,
                        }
                    })
                    .collect(),
            },
        }
    }

    fn value(&self, y: f64, x: f64, t: f64, c: usize) -> f64 {
        let grating = |w: &Wave, x: f64, y: f64| w.amp[c] * (TAU * (w.fx * x + w.fy * y) + w.phase).sin();
        match self {
            Scene::Gradient { dir, slope, base, ripple, v } => {
                let (xs, ys) = (x - v.0 * t, y - v.1 * t);
                base[c] + slope[c] * (xs * dir.0 + ys * dir.1) + grating(ripple, xs, ys)
            }
            Scene::Texture { base, waves, v } => {
                let (xs, ys) = (x - v.0 * t, y - v.1 * t);
                base[c] + waves.iter().map(|w| grating(w, xs, ys)).sum::<f64>()
            }
            Scene::Shapes { base, slope, discs } => {
                let mut v = base[c] + slope[c] * (x + y);
                for d in discs {
                    let dist = ((x - d.x - d.vx * t).powi(2) + (y - d.y - d.vy * t).powi(2)).sqrt();
                    // Smooth edge about two pixels wide.
                    let alpha = 1.0 / (1.0 + ((dist - d.radius) / 0.8).exp());
                    v = v * (1.0 - alpha) + d.color[c] * alpha;
                }
                v
            }
        }
    }
}

/// Render frame `t` of a scene at `h x w`, already quantized to 8-bit levels.
fn render(scene: &Scene, h: usize, w: usize, t: f64) -> Tensor<f32> {
    let img = Tensor::from_fn(&[h, w, 3], |i| {
        let (y, x, c) = (i / (3 * w), (i / 3) % w, i % 3);
        scene.value(y as f64 + 0.5, x as f64 + 0.5, t, c) as f32
    });
    quantize_tensor(&img)
}

/// HR frames of one clip, deterministic in `(seed, index)`.
pub fn synthetic_clip(index: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let scene = Scene::sample(Pattern::of_clip(index), h.max(w) as f64, &mut rng);
    (0..SEPTUPLET_LEN).map(|t| render(&scene, h, w, t as f64)).collect()
}

pub fn synthetic_sequence_name(index: usize) -> String {
    format!("synth{index:03}/0001")
}

/// Write `count` septuplets with `h x w` HR frames and their `1/scale` LR
/// counterparts in the septuplet layout. Both split lists name every clip.
pub fn make_synthetic(root: &Path, count: usize, h: usize, w: usize, scale: usize, seed: u64) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(GrrnError::Config("synthetic dataset needs at least one clip".into()));
    }
    if scale == 0 || !h.is_multiple_of(scale) || !w.is_multiple_of(scale) {
        return Err(GrrnError::Validation(format!("{h}x{w} is not divisible by scale {scale}")));
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let name = synthetic_sequence_name(i);
        let hr_dir = root.join("sequences").join(&name);
        let lr_dir = root.join("sequences_lr").join(&name);
        for (k, hr) in synthetic_clip(i, h, w, seed).iter().enumerate() {
            let file = format!("im{}.png", k + 1);
            write_rgb(&hr_dir.join(&file), hr)?;
            write_rgb(&lr_dir.join(&file), &bicubic_downsample(hr, scale)?)?;
        }
        entries.push(name);
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        entries,
        split: Split::Train,
        layout: DatasetLayout::Septuplet,
    };
    manifest.write_list(&root.join("sep_trainlist.txt"))?;
    manifest.write_list(&root.join("sep_testlist.txt"))?;
    Ok(manifest)
}
