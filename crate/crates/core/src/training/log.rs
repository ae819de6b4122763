use std::fmt::Write as _;
use std::path::Path;

use crate::error::{GrrnError, Result};
use crate::metrics::{format_psnr, ScorePair};

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Steps completed including this one.
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Before clipping.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub validation: Option<ScorePair>,
}

impl EpochRecord {
    pub fn summary(&self) -> String {
        let mut s = format!("epoch {:>4}  lr {:.3e}  loss {:.6}", self.epoch, self.lr, self.mean_loss);
        if let Some(v) = self.validation {
            let _ = write!(s, "  val {} dB / {:.4}", format_psnr(v.psnr), v.ssim);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreezeEvent {
    pub epoch: usize,
    /// Steps completed when the freeze took effect.
    pub step: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub freezes: Vec<FreezeEvent>,
}

impl TrainLog {
    /// Learning rate of every logged epoch, in order.
    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    /// Number of times the rate dropped between consecutive epochs.
    pub fn halvings(&self) -> usize {
        self.lr_trace().windows(2).filter(|w| w[1] < w[0]).count()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::from("step,epoch,lr,loss,grad_norm\n");
        for s in &self.steps {
            let _ = writeln!(out, "{},{},{:e},{:.9},{:.6e}", s.step, s.epoch, s.lr, s.loss, s.grad_norm);
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,lr,mean_loss,val_psnr_db,val_ssim,bn_frozen_here\n");
        for e in &self.epochs {
            let (p, s) = match e.validation {
                Some(v) if v.psnr.is_finite() => (format!("{:.4}", v.psnr), format!("{:.6}", v.ssim)),
                Some(v) => (String::new(), format!("{:.6}", v.ssim)),
                None => (String::new(), String::new()),
            };
            let frozen = self.freezes.iter().any(|f| f.epoch == e.epoch);
            let _ = writeln!(out, "{},{:e},{:.9},{p},{s},{frozen}", e.epoch, e.lr, e.mean_loss);
        }
        out
    }

    /// Write `train_steps.csv` and `train_epochs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GrrnError::io(dir, e))?;
        for (name, text) in [("train_steps.csv", self.steps_csv()), ("train_epochs.csv", self.epochs_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| GrrnError::io(&p, e))?;
        }
        Ok(())
    }
}
