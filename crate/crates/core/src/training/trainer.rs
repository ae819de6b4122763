use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{EpochRecord, FreezeEvent, StepRecord, TrainLog};
use super::optimizer::{adam_step, OptimizerState};
use super::plan::{lr_at, TrainPlan};
use crate::data::{load_clip, save_checkpoint, Checkpoint, DatasetManifest, VideoClip};
use crate::error::{GrrnError, Result};
use crate::layers::{charbonnier_loss, Renorm};
use crate::metrics::{evaluate, Channel, Dihedral};
use crate::model::{Grrn, Mode, ParamGrads};
use crate::tensor::Tensor;

/// Indexed access to training clips.
pub trait ClipSource {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> Result<VideoClip>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ClipSource for Vec<VideoClip> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<VideoClip> {
        Ok(self[index].clone())
    }
}

/// Loads clips from disk on every access.
#[derive(Clone, Debug)]
pub struct ManifestSource {
    pub manifest: DatasetManifest,
    pub radius: usize,
    pub scale: usize,
}

impl ClipSource for ManifestSource {
    fn len(&self) -> usize {
        self.manifest.len()
    }

    fn get(&self, index: usize) -> Result<VideoClip> {
        load_clip(&self.manifest, index, self.radius, self.scale)
    }
}

// Mixed into the seed for per-step augmentation draws so they do not share
// a stream with the epoch shuffles.
const AUGMENT_SALT: u64 = 0x5eed_a06e;

/// Clip indices of every minibatch of `epoch`, in order. A trailing batch of
/// one clip is folded into the previous batch so batch statistics always
/// see at least two samples.
pub fn epoch_batches(len: usize, minibatch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(minibatch.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// Crop a clip to an LR square of edge `patch` at `(y, x)`; the target is
/// cropped at the matching HR position.
pub fn crop_clip(clip: &VideoClip, y: usize, x: usize, patch: usize, scale: usize) -> Result<VideoClip> {
    let frames = clip
        .lr_frames
        .iter()
        .map(|f| crop(f, y, x, patch, patch))
        .collect::<Result<Vec<_>>>()?;
    let target = crop(&clip.hr_target, y * scale, x * scale, patch * scale, patch * scale)?;
    VideoClip::new(frames, target, clip.clip_id.clone(), scale)
}

fn crop(img: &Tensor<f32>, y: usize, x: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    let s = img.shape();
    if y + h > s[0] || x + w > s[1] {
        return Err(GrrnError::Validation(format!(
            "crop {h}x{w} at ({y}, {x}) exceeds image {}x{}",
            s[0], s[1]
        )));
    }
    let c = s[2];
    let mut data = Vec::with_capacity(h * w * c);
    for r in y..y + h {
        let start = (r * s[1] + x) * c;
        data.extend_from_slice(&img.data()[start..start + w * c]);
    }
    Tensor::new(&[h, w, c], data)
}

/// Frames `[N, H, W, T, 3]` and targets `[N, rH, rW, 3]` of one minibatch.
pub fn assemble_batch(clips: &[VideoClip], transform: Dihedral) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let frames = clips
        .iter()
        .map(|c| transform.apply_frames(&c.frames_tensor()))
        .collect::<Result<Vec<_>>>()?;
    let targets = clips
        .iter()
        .map(|c| transform.apply(&c.hr_target))
        .collect::<Result<Vec<_>>>()?;
    let frames = Tensor::stack(&frames)
        .map_err(|_| GrrnError::Validation("clips in one minibatch differ in size".into()))?;
    Ok((frames, Tensor::stack(&targets)?))
}

/// Runs the optimization schedule over a clip source. State advances one
/// minibatch at a time and can be checkpointed and resumed at any step.
pub struct Trainer<S: ClipSource> {
    model: Grrn<f32>,
    optimizer: OptimizerState<f32>,
    plan: TrainPlan,
    source: S,
    step: u64,
    epoch: usize,
    steps_per_epoch: usize,
    log: TrainLog,
    validation: Option<(DatasetManifest, Channel)>,
    last_grads: Option<ParamGrads<f32>>,
    pub verbose: bool,
}

impl<S: ClipSource> Trainer<S> {
    pub fn new(model: Grrn<f32>, source: S, plan: TrainPlan) -> Result<Self> {
        let ckpt = Checkpoint::new(model);
        Self::from_checkpoint(ckpt, source, plan)
    }

    /// Continue from saved weights, moments and counters.
    pub fn from_checkpoint(ckpt: Checkpoint, source: S, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        if source.is_empty() {
            return Err(GrrnError::Validation("training set is empty".into()));
        }
        let unfrozen_epochs = plan.bn_freeze_epoch > 0 && !ckpt.model.is_bn_frozen();
        if unfrozen_epochs && source.len() < 2 {
            return Err(GrrnError::Validation(
                "batch-norm training needs at least two clips".into(),
            ));
        }
        let steps_per_epoch = epoch_batches(source.len(), plan.minibatch, plan.seed, 0).len();
        Ok(Trainer {
            model: ckpt.model,
            optimizer: ckpt.optimizer,
            plan,
            source,
            step: ckpt.step,
            epoch: ckpt.epoch as usize,
            steps_per_epoch,
            log: TrainLog::default(),
            validation: None,
            last_grads: None,
            verbose: false,
        })
    }

    /// Score the model on `manifest` after every epoch.
    pub fn with_validation(mut self, manifest: DatasetManifest, channel: Channel) -> Self {
        self.validation = Some((manifest, channel));
        self
    }

    pub fn model(&self) -> &Grrn<f32> {
        &self.model
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Epochs fully completed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    /// Gradients of the most recent step.
    pub fn last_gradients(&self) -> Option<&ParamGrads<f32>> {
        self.last_grads.as_ref()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            step: self.step,
            epoch: self.epoch as u32,
        }
    }

    pub fn into_parts(self) -> (Grrn<f32>, TrainLog) {
        (self.model, self.log)
    }

    fn renorm(&self) -> Renorm {
        let warm = self.plan.bn_freeze_epoch * self.steps_per_epoch;
        if warm == 0 {
            return Renorm::PLAIN;
        }
        let progress = self.step as f64 / warm as f64;
        Renorm::ramp(progress, self.plan.renorm_r_max, self.plan.renorm_d_max)
    }

    fn done(&self) -> bool {
        self.epoch >= self.plan.epochs || self.plan.max_steps.is_some_and(|m| self.step >= m)
    }

    fn freeze_if_due(&mut self) {
        if self.epoch >= self.plan.bn_freeze_epoch && !self.model.is_bn_frozen() {
            self.model.freeze_batch_norm();
            self.log.freezes.push(FreezeEvent {
                epoch: self.epoch,
                step: self.step,
            });
            if self.verbose {
                eprintln!("epoch {}: batch norm frozen", self.epoch);
            }
        }
    }

    fn augmentation(&self) -> (ChaCha8Rng, Dihedral) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.plan.seed ^ AUGMENT_SALT);
        rng.set_stream(self.step);
        let d = if self.plan.augment {
            Dihedral::ALL[rng.gen_range(0..Dihedral::ALL.len())]
        } else {
            Dihedral::Identity
        };
        (rng, d)
    }

    /// One optimizer step on the given clips with no augmentation, at the
    /// learning rate of the current epoch. Counters and log advance as in
    /// [`Trainer::train_step`].
    pub fn step_on(&mut self, clips: &[VideoClip]) -> Result<StepRecord> {
        self.update(clips, Dihedral::Identity)
    }

    fn update(&mut self, clips: &[VideoClip], transform: Dihedral) -> Result<StepRecord> {
        let (frames, targets) = assemble_batch(clips, transform)?;
        let trace = self.model.forward_with(&frames, Mode::Train, self.renorm(), true)?;
        let inv = 1.0 / 255.0;
        let pred = trace.output.scale(inv);
        let loss = charbonnier_loss(&pred, &targets.scale(inv), self.plan.charbonnier_epsilon)?;
        if !loss.value.is_finite() {
            let culprit = self.model.params().first_non_finite().unwrap_or("network output");
            return Err(GrrnError::Numeric(format!(
                "loss is {} at step {}; first non-finite tensor: {culprit}",
                loss.value, self.step
            )));
        }
        let mut grads = self.model.backward(&trace, &loss.grad.scale(inv))?;
        grads.check_finite(self.model.params())?;
        let grad_norm = grads.global_norm();
        if let Some(c) = self.plan.grad_clip {
            if grad_norm > c {
                grads.scale((c / grad_norm) as f32);
            }
        }
        self.model.apply_stat_updates(trace.bn_updates)?;
        let lr = lr_at(self.epoch, &self.plan);
        let frozen = self.model.is_bn_frozen();
        adam_step(self.model.params_mut(), &grads, &mut self.optimizer, lr, frozen)?;
        if let Some(name) = self.model.params().first_non_finite() {
            return Err(GrrnError::Numeric(format!(
                "parameter {name} became non-finite at step {}",
                self.step
            )));
        }
        self.step += 1;
        let rec = StepRecord {
            step: self.step,
            epoch: self.epoch,
            lr,
            loss: loss.value,
            grad_norm,
        };
        self.log.steps.push(rec.clone());
        self.last_grads = Some(grads);
        Ok(rec)
    }

    fn load_batch(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<VideoClip>> {
        let scale = self.model.config().scale_r;
        let mut clips = Vec::with_capacity(indices.len());
        for &i in indices {
            let clip = self.source.get(i)?;
            clip.validate(scale)?;
            if clip.lr_frames.len() != self.model.config().frames() {
                return Err(GrrnError::Validation(format!(
                    "clip {} has {} frames, the model needs {}",
                    clip.clip_id,
                    clip.lr_frames.len(),
                    self.model.config().frames()
                )));
            }
            clips.push(match self.plan.patch {
                Some(p) => {
                    let s = clip.lr_middle().shape();
                    if p > s[0] || p > s[1] {
                        return Err(GrrnError::Validation(format!(
                            "patch {p} exceeds clip {} of {}x{}",
                            clip.clip_id, s[0], s[1]
                        )));
                    }
                    let y = rng.gen_range(0..=s[0] - p);
                    let x = rng.gen_range(0..=s[1] - p);
                    crop_clip(&clip, y, x, p, scale)?
                }
                None => clip,
            });
        }
        Ok(clips)
    }

    /// Advance one scheduled minibatch. Returns `None` once the plan is done.
    pub fn train_step(&mut self) -> Result<Option<StepRecord>> {
        if self.done() {
            return Ok(None);
        }
        self.freeze_if_due();
        let batches = epoch_batches(self.source.len(), self.plan.minibatch, self.plan.seed, self.epoch);
        let offset = (self.step - (self.epoch * self.steps_per_epoch) as u64) as usize;
        let Some(indices) = batches.get(offset) else {
            return Err(GrrnError::State(format!(
                "step {} lies outside epoch {} ({} steps per epoch)",
                self.step, self.epoch, self.steps_per_epoch
            )));
        };
        let (mut rng, transform) = self.augmentation();
        let clips = self.load_batch(indices, &mut rng)?;
        let rec = self.update(&clips, transform)?;
        if offset + 1 == self.steps_per_epoch {
            self.finish_epoch()?;
        }
        Ok(Some(rec))
    }

    fn finish_epoch(&mut self) -> Result<()> {
        let epoch = self.epoch;
        let losses: Vec<f64> = self.log.steps.iter().filter(|s| s.epoch == epoch).map(|s| s.loss).collect();
        let mean_loss = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        let val = match &self.validation {
            Some((manifest, channel)) => Some(evaluate(&self.model, manifest, false, *channel)?.mean),
            None => None,
        };
        self.epoch += 1;
        let rec = EpochRecord {
            epoch,
            lr: lr_at(epoch, &self.plan),
            mean_loss,
            validation: val,
        };
        if self.verbose {
            eprintln!("{}", rec.summary());
        }
        self.log.epochs.push(rec);
        if let Some(dir) = self.plan.checkpoint_dir.clone() {
            let ckpt = self.checkpoint();
            save_checkpoint(&epoch_checkpoint_path(&dir, self.epoch), &ckpt)?;
            save_checkpoint(&dir.join("last.ckpt"), &ckpt)?;
        }
        Ok(())
    }

    /// Train until the plan's epoch or step budget is exhausted. A run that
    /// stops mid-epoch still leaves `last.ckpt` behind.
    pub fn run(&mut self) -> Result<()> {
        while self.train_step()?.is_some() {}
        if let Some(dir) = self.plan.checkpoint_dir.clone() {
            save_checkpoint(&dir.join("last.ckpt"), &self.checkpoint())?;
        }
        Ok(())
    }
}

/// Path of the checkpoint written after `epoch` completed epochs.
pub fn epoch_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

/// Train `model` on `source` from scratch and return the final weights and log.
pub fn train<S: ClipSource>(model: Grrn<f32>, source: S, plan: TrainPlan) -> Result<(Grrn<f32>, TrainLog)> {
    let mut t = Trainer::new(model, source, plan)?;
    t.run()?;
    Ok(t.into_parts())
}
