use std::path::PathBuf;

use crate::error::{config_err, Result};
use crate::layers::{CHARBONNIER_EPSILON, RENORM_D_MAX, RENORM_R_MAX};

pub const DEFAULT_INITIAL_LR: f64 = 4e-4;
pub const DEFAULT_MILESTONES: [usize; 5] = [10, 20, 30, 40, 50];
pub const DEFAULT_MINIBATCH: usize = 16;
pub const DEFAULT_BN_FREEZE_EPOCH: usize = 5;
/// Number of halvings; the final rate is `initial / 32`.
pub const HALVINGS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub initial_lr: f64,
    /// Epochs at whose start the rate halves. Exactly five, strictly increasing.
    pub milestones: Vec<usize>,
    pub minibatch: usize,
    /// Batch norm is frozen at the start of this epoch.
    pub bn_freeze_epoch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Random flips and quarter turns of whole training batches.
    pub augment: bool,
    /// Edge of square low-resolution crops taken at random per clip;
    /// `None` trains on whole clips.
    pub patch: Option<usize>,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Batch-renorm clip limits reached at the freeze epoch.
    pub renorm_r_max: f64,
    pub renorm_d_max: f64,
    pub charbonnier_epsilon: f64,
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<u64>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            initial_lr: DEFAULT_INITIAL_LR,
            milestones: DEFAULT_MILESTONES.to_vec(),
            minibatch: DEFAULT_MINIBATCH,
            bn_freeze_epoch: DEFAULT_BN_FREEZE_EPOCH,
            epochs: 60,
            seed: 0,
            augment: true,
            patch: None,
            grad_clip: None,
            renorm_r_max: RENORM_R_MAX,
            renorm_d_max: RENORM_D_MAX,
            charbonnier_epsilon: CHARBONNIER_EPSILON,
            max_steps: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(config_err!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if self.milestones.len() != HALVINGS {
            return Err(config_err!(
                "milestones: expected {HALVINGS} epochs, got {}",
                self.milestones.len()
            ));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err!("milestones must be strictly increasing: {:?}", self.milestones));
        }
        if self.minibatch == 0 || (self.minibatch < 2 && self.bn_freeze_epoch > 0) {
            return Err(config_err!(
                "minibatch must be at least 2 while batch norm trains, got {}",
                self.minibatch
            ));
        }
        if self.epochs == 0 {
            return Err(config_err!("epochs must be positive"));
        }
        if self.patch == Some(0) {
            return Err(config_err!("patch must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(config_err!("grad_clip must be positive, got {c}"));
            }
        }
        if self.renorm_r_max < 1.0 || self.renorm_d_max < 0.0 {
            return Err(config_err!("renorm limits need r_max >= 1 and d_max >= 0"));
        }
        if !(self.charbonnier_epsilon > 0.0) {
            return Err(config_err!("charbonnier_epsilon must be positive"));
        }
        Ok(())
    }

    /// Halvings in effect during `epoch`, capped at five.
    pub fn halvings_at(&self, epoch: usize) -> usize {
        self.milestones.iter().filter(|&&m| epoch >= m).count().min(HALVINGS)
    }
}

/// `initial_lr * 2^-k` where `k` milestones have been reached.
pub fn lr_at(epoch: usize, plan: &TrainPlan) -> f64 {
    plan.initial_lr / (1u32 << plan.halvings_at(epoch)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let p = TrainPlan::default();
        assert_eq!(lr_at(0, &p), 4e-4);
        assert_eq!(lr_at(9, &p), 4e-4);
        assert_eq!(lr_at(10, &p), 2e-4);
        assert_eq!(lr_at(50, &p), 1.25e-5);
        assert_eq!(lr_at(1000, &p), 4e-4 / 32.0);
        let mut prev = f64::INFINITY;
        for e in 0..80 {
            assert!(lr_at(e, &p) <= prev);
            prev = lr_at(e, &p);
        }
    }

    #[test]
    fn validation() {
        assert!(TrainPlan::default().validate().is_ok());
        let bad = [
            TrainPlan { milestones: vec![1, 2, 3, 4], ..TrainPlan::default() },
            TrainPlan { milestones: vec![1, 2, 2, 4, 5], ..TrainPlan::default() },
            TrainPlan { minibatch: 1, ..TrainPlan::default() },
            TrainPlan { initial_lr: 0.0, ..TrainPlan::default() },
            TrainPlan { grad_clip: Some(-1.0), ..TrainPlan::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        let frozen_from_start = TrainPlan { minibatch: 1, bn_freeze_epoch: 0, ..TrainPlan::default() };
        assert!(frozen_from_start.validate().is_ok());
    }
}
