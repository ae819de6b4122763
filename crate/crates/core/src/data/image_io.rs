use std::path::Path;

use image::{ImageReader, RgbImage};

use crate::error::{GrrnError, Result};
use crate::tensor::Tensor;

/// Decode any supported image as 8-bit RGB into `[H, W, 3]` values in `0..=255`.
pub fn read_rgb(path: &Path) -> Result<Tensor<f32>> {
    let reader = ImageReader::open(path).map_err(|e| GrrnError::io(path, e))?;
    let img = reader
        .with_guessed_format()
        .map_err(|e| GrrnError::io(path, e))?
        .decode()
        .map_err(|e| GrrnError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(f32::from).collect();
    Tensor::new(&[h as usize, w as usize, 3], data)
}

/// Round to nearest and clamp to the 8-bit range.
pub fn quantize(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Apply [`quantize`] elementwise, keeping the float representation.
pub fn quantize_tensor(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| f32::from(quantize(v)))
}

/// Write `[H, W, 3]` as an 8-bit PNG after rounding and clamping.
pub fn write_rgb(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(GrrnError::Shape(format!("expected [H, W, 3] image, got {s:?}")));
    }
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let buf = RgbImage::from_raw(s[1] as u32, s[0] as u32, bytes).expect("buffer length matches shape");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| GrrnError::io(dir, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| GrrnError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
