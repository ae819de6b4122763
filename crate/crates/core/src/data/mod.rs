//! Datasets, image files, synthetic data and checkpoints.

mod bicubic;
mod checkpoint;
mod clip;
mod image_io;
mod synthetic;

pub use bicubic::{bicubic_downsample, bicubic_upsample, resize_bicubic, BICUBIC_A};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use clip::{
    frame_name, load_clip, lr_video_windows, stack_time, window_indices, DatasetLayout, DatasetManifest, Split,
    VideoClip, SEPTUPLET_LEN,
};
pub use image_io::{quantize, quantize_tensor, read_rgb, write_rgb};
pub use synthetic::{make_synthetic, synthetic_clip, synthetic_sequence_name, Pattern};
