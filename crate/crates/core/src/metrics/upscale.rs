use std::cell::Cell;

use super::dihedral::Dihedral;
use crate::data::{bicubic_upsample, stack_time};
use crate::error::{shape_err, Result};
use crate::layers::bilinear_upsample;
use crate::model::{Grrn, Mode};
use crate::tensor::Tensor;

/// Anything that maps a window of `2n + 1` low-resolution frames to one
/// high-resolution frame in `0..=255`.
pub trait Upscaler {
    fn radius(&self) -> usize;
    fn scale(&self) -> usize;
    fn name(&self) -> String;
    /// `frames`: `2n + 1` tensors of `[H, W, 3]`. Returns `[rH, rW, 3]`.
    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>>;
}

fn check_window(frames: &[Tensor<f32>], radius: usize) -> Result<()> {
    if frames.len() != 2 * radius + 1 {
        return Err(shape_err!("expected {} frames, got {}", 2 * radius + 1, frames.len()));
    }
    Ok(())
}

impl Upscaler for Grrn<f32> {
    fn radius(&self) -> usize {
        self.config().radius
    }

    fn scale(&self) -> usize {
        self.config().scale_r
    }

    fn name(&self) -> String {
        "grrn".to_string()
    }

    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        check_window(frames, self.radius())?;
        self.forward(&stack_time(frames), Mode::Inference)
    }
}

/// Bilinear interpolation of the middle frame.
#[derive(Clone, Copy, Debug)]
pub struct BilinearBaseline {
    pub scale: usize,
    pub radius: usize,
}

impl Upscaler for BilinearBaseline {
    fn radius(&self) -> usize {
        self.radius
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn name(&self) -> String {
        "bilinear".to_string()
    }

    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        check_window(frames, self.radius)?;
        Ok(bilinear_upsample(&frames[self.radius], self.scale)?.map(|v| v.clamp(0.0, 255.0)))
    }
}

/// Bicubic interpolation of the middle frame.
#[derive(Clone, Copy, Debug)]
pub struct BicubicBaseline {
    pub scale: usize,
    pub radius: usize,
}

impl Upscaler for BicubicBaseline {
    fn radius(&self) -> usize {
        self.radius
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn name(&self) -> String {
        "bicubic".to_string()
    }

    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        check_window(frames, self.radius)?;
        Ok(bicubic_upsample(&frames[self.radius], self.scale)?.map(|v| v.clamp(0.0, 255.0)))
    }
}

/// Average over the eight dihedral transforms of the input window.
///
/// Per pixel the eight values are sorted before summing, so the result does
/// not depend on which transform produced which value and equivariance holds
/// bit for bit.
pub fn tta_infer<U: Upscaler + ?Sized>(model: &U, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let outputs = Dihedral::ALL
        .iter()
        .map(|&d| {
            let tf = frames.iter().map(|f| d.apply(f)).collect::<Result<Vec<_>>>()?;
            d.inverse().apply(&model.upscale(&tf)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let shape = outputs[0].shape().to_vec();
    if let Some(o) = outputs.iter().find(|o| o.shape() != shape.as_slice()) {
        return Err(shape_err!("transformed outputs differ in shape: {:?} vs {shape:?}", o.shape()));
    }
    let mut vals = [0.0f32; 8];
    let data = (0..outputs[0].len())
        .map(|i| {
            for (v, o) in vals.iter_mut().zip(&outputs) {
                *v = o.data()[i];
            }
            vals.sort_by(f32::total_cmp);
            (vals.iter().map(|&v| f64::from(v)).sum::<f64>() / 8.0) as f32
        })
        .collect();
    Tensor::new(&shape, data)
}

/// Wraps an upscaler with test-time augmentation.
pub struct Tta<'a, U: Upscaler + ?Sized>(pub &'a U);

impl<U: Upscaler + ?Sized> Upscaler for Tta<'_, U> {
    fn radius(&self) -> usize {
        self.0.radius()
    }

    fn scale(&self) -> usize {
        self.0.scale()
    }

    fn name(&self) -> String {
        format!("{}+tta", self.0.name())
    }

    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        tta_infer(self.0, frames)
    }
}

/// Counts calls to the wrapped upscaler.
pub struct CountingUpscaler<'a, U: Upscaler + ?Sized> {
    pub inner: &'a U,
    pub calls: Cell<usize>,
}

impl<'a, U: Upscaler + ?Sized> CountingUpscaler<'a, U> {
    pub fn new(inner: &'a U) -> Self {
        CountingUpscaler {
            inner,
            calls: Cell::new(0),
        }
    }
}

impl<U: Upscaler + ?Sized> Upscaler for CountingUpscaler<'_, U> {
    fn radius(&self) -> usize {
        self.inner.radius()
    }

    fn scale(&self) -> usize {
        self.inner.scale()
    }

    fn name(&self) -> String {
        self.inner.name()
    }

    fn upscale(&self, frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.upscale(frames)
    }
}
