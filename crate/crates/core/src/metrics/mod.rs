//! Image quality scores, dihedral test-time augmentation and dataset evaluation.

mod dihedral;
mod quality;
mod report;
mod upscale;

pub use dihedral::Dihedral;
pub use quality::{
    format_psnr, gaussian_window, psnr, psnr_with, score, ssim, ssim_with, Channel, ScorePair, SSIM_K1, SSIM_K2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use report::{evaluate, evaluate_with, ClipScore, EvalReport};
pub use upscale::{tta_infer, BicubicBaseline, BilinearBaseline, CountingUpscaler, Tta, Upscaler};
