use std::fmt;
use std::path::{Path, PathBuf};

use super::bicubic::bicubic_downsample;
use super::image_io::{quantize_tensor, read_rgb};
use crate::error::{GrrnError, Result};
use crate::tensor::Tensor;

/// Frames per Vimeo-style septuplet directory.
pub const SEPTUPLET_LEN: usize = 7;

/// A window of low-resolution frames and the high-resolution middle frame.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    /// `2n + 1` frames of `[H, W, 3]`, temporally ordered.
    pub lr_frames: Vec<Tensor<f32>>,
    /// `[rH, rW, 3]`
    pub hr_target: Tensor<f32>,
    pub clip_id: String,
}

impl VideoClip {
    pub fn new(lr_frames: Vec<Tensor<f32>>, hr_target: Tensor<f32>, clip_id: impl Into<String>, scale: usize) -> Result<Self> {
        let clip = VideoClip {
            lr_frames,
            hr_target,
            clip_id: clip_id.into(),
        };
        clip.validate(scale)?;
        Ok(clip)
    }

    pub fn validate(&self, scale: usize) -> Result<()> {
        let first = self
            .lr_frames
            .first()
            .ok_or_else(|| GrrnError::Validation(format!("clip {} has no frames", self.clip_id)))?;
        let s = first.shape();
        if s.len() != 3 || s[2] != 3 {
            return Err(GrrnError::Validation(format!("clip {}: frame shape {s:?}", self.clip_id)));
        }
        if self.lr_frames.len().is_multiple_of(2) {
            return Err(GrrnError::Validation(format!(
                "clip {}: even frame count {}",
                self.clip_id,
                self.lr_frames.len()
            )));
        }
        if let Some(f) = self.lr_frames.iter().find(|f| f.shape() != s) {
            return Err(GrrnError::Validation(format!(
                "clip {}: frame sizes differ ({:?} vs {s:?})",
                self.clip_id,
                f.shape()
            )));
        }
        if self.hr_target.shape() != [s[0] * scale, s[1] * scale, 3] {
            return Err(GrrnError::Validation(format!(
                "clip {}: target {:?} is not {scale}x of {s:?}",
                self.clip_id,
                self.hr_target.shape()
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.lr_frames.len() / 2
    }

    pub fn lr_middle(&self) -> &Tensor<f32> {
        &self.lr_frames[self.radius()]
    }

    /// Frames interleaved along a time axis: `[H, W, T, 3]`.
    pub fn frames_tensor(&self) -> Tensor<f32> {
        stack_time(&self.lr_frames)
    }
}

/// `T` tensors of `[H, W, C]` into one `[H, W, T, C]`.
pub fn stack_time(frames: &[Tensor<f32>]) -> Tensor<f32> {
    let s = frames[0].shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let t = frames.len();
    let mut data = Vec::with_capacity(h * w * t * c);
    for px in 0..h * w {
        for f in frames {
            data.extend_from_slice(&f.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::new(&[h, w, t, c], data).expect("frames share a shape")
}

/// Source frame indices for a window centred on `t` in a `total`-frame video,
/// replicating the first and last frames past either end.
pub fn window_indices(t: usize, total: usize, radius: usize) -> Vec<usize> {
    (0..=2 * radius)
        .map(|k| (t + k).saturating_sub(radius).min(total - 1))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(GrrnError::Config(format!("unknown split {s:?} (train, val or test)"))),
        }
    }

    fn list_names(self) -> &'static [&'static str] {
        match self {
            Split::Train => &["sep_trainlist.txt"],
            Split::Val => &["sep_vallist.txt", "sep_testlist.txt"],
            Split::Test => &["sep_testlist.txt"],
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetLayout {
    /// `root/sequences/<seq>/<sub>/im1.png..im7.png`, optional LR copies
    /// under `root/sequences_lr/`.
    Septuplet,
    /// `root/<video>/frame_%04d.png`; entries are `<video>@<t>`.
    LongVideo,
}

/// Which clips make up a split, and where they live.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<String>,
    pub split: Split,
    pub layout: DatasetLayout,
}

fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| GrrnError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

fn count_frames(dir: &Path) -> Result<usize> {
    let mut n = 0;
    while dir.join(frame_name(n)).is_file() {
        n += 1;
    }
    if n == 0 {
        return Err(GrrnError::Validation(format!("no frame_0000.png in {}", dir.display())));
    }
    Ok(n)
}

impl DatasetManifest {
    /// Read the split list of a septuplet dataset.
    pub fn septuplet(root: impl Into<PathBuf>, split: Split) -> Result<Self> {
        let root = root.into();
        let list = split
            .list_names()
            .iter()
            .map(|n| root.join(n))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                GrrnError::io(
                    root.join(split.list_names()[0]),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "split list not found"),
                )
            })?;
        let entries = read_list(&list)?;
        if entries.is_empty() {
            return Err(GrrnError::Validation(format!("{} lists no sequences", list.display())));
        }
        Ok(DatasetManifest {
            root,
            entries,
            split,
            layout: DatasetLayout::Septuplet,
        })
    }

    /// One entry per frame of every video directory under `root`.
    pub fn long_video(root: impl Into<PathBuf>, split: Split) -> Result<Self> {
        let root = root.into();
        let mut videos: Vec<String> = std::fs::read_dir(&root)
            .map_err(|e| GrrnError::io(&root, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(frame_name(0)).is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        videos.sort();
        let mut entries = Vec::new();
        for v in videos {
            let n = count_frames(&root.join(&v))?;
            entries.extend((0..n).map(|t| format!("{v}@{t}")));
        }
        if entries.is_empty() {
            return Err(GrrnError::Validation(format!("no videos under {}", root.display())));
        }
        Ok(DatasetManifest {
            root,
            entries,
            split,
            layout: DatasetLayout::LongVideo,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Write the entries, one per line, in order.
    pub fn write_list(&self, path: &Path) -> Result<()> {
        let mut text = self.entries.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| GrrnError::io(path, e))
    }

    pub fn read_list(root: impl Into<PathBuf>, path: &Path, split: Split, layout: DatasetLayout) -> Result<Self> {
        Ok(DatasetManifest {
            root: root.into(),
            entries: read_list(path)?,
            split,
            layout,
        })
    }

    /// Sequence name used to group per-clip scores.
    pub fn sequence_of(&self, index: usize) -> String {
        let e = &self.entries[index];
        match self.layout {
            DatasetLayout::Septuplet => e.split('/').next().unwrap_or(e).to_string(),
            DatasetLayout::LongVideo => e.split('@').next().unwrap_or(e).to_string(),
        }
    }
}

fn load_lr(hr_path: &Path, lr_path: Option<PathBuf>, scale: usize) -> Result<Tensor<f32>> {
    match lr_path {
        Some(p) if p.is_file() => read_rgb(&p),
        _ => Ok(quantize_tensor(&bicubic_downsample(&read_rgb(hr_path)?, scale)?)),
    }
}

/// Load clip `index` with `2n + 1` low-resolution frames. Missing LR copies
/// are synthesized from the HR frames by bicubic downsampling.
pub fn load_clip(manifest: &DatasetManifest, index: usize, radius: usize, scale: usize) -> Result<VideoClip> {
    let entry = manifest
        .entries
        .get(index)
        .ok_or_else(|| GrrnError::Validation(format!("clip index {index} out of range ({})", manifest.len())))?;
    let root = &manifest.root;
    match manifest.layout {
        DatasetLayout::Septuplet => {
            if 2 * radius + 1 > SEPTUPLET_LEN {
                return Err(GrrnError::Config(format!(
                    "radius {radius} needs more than {SEPTUPLET_LEN} frames"
                )));
            }
            let hr_dir = root.join("sequences").join(entry);
            let lr_dir = root.join("sequences_lr").join(entry);
            let mid = SEPTUPLET_LEN / 2 + 1;
            let mut lr = Vec::with_capacity(2 * radius + 1);
            for k in mid - radius..=mid + radius {
                let name = format!("im{k}.png");
                lr.push(load_lr(&hr_dir.join(&name), Some(lr_dir.join(&name)), scale)?);
            }
            let hr = read_rgb(&hr_dir.join(format!("im{mid}.png")))?;
            VideoClip::new(lr, hr, entry.clone(), scale)
        }
        DatasetLayout::LongVideo => {
            let (video, t) = entry
                .split_once('@')
                .and_then(|(v, t)| t.parse::<usize>().ok().map(|t| (v, t)))
                .ok_or_else(|| GrrnError::Validation(format!("bad long-video entry {entry:?}")))?;
            let dir = root.join(video);
            let lr_dir = root.join(format!("{video}_lr"));
            let total = count_frames(&dir)?;
            let lr = window_indices(t, total, radius)
                .into_iter()
                .map(|i| load_lr(&dir.join(frame_name(i)), Some(lr_dir.join(frame_name(i))), scale))
                .collect::<Result<Vec<_>>>()?;
            let hr = read_rgb(&dir.join(frame_name(t)))?;
            VideoClip::new(lr, hr, entry.clone(), scale)
        }
    }
}

/// Every window of a directory of low-resolution frames, for inference.
pub fn lr_video_windows(dir: &Path, radius: usize) -> Result<Vec<Vec<Tensor<f32>>>> {
    let total = count_frames(dir)?;
    let frames = (0..total)
        .map(|i| read_rgb(&dir.join(frame_name(i))))
        .collect::<Result<Vec<_>>>()?;
    if let Some(f) = frames.iter().find(|f| f.shape() != frames[0].shape()) {
        return Err(GrrnError::Validation(format!(
            "frame sizes differ in {}: {:?} vs {:?}",
            dir.display(),
            f.shape(),
            frames[0].shape()
        )));
    }
    Ok((0..total)
        .map(|t| window_indices(t, total, radius).into_iter().map(|i| frames[i].clone()).collect())
        .collect())
}
