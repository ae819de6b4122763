use grrn::data::{load_checkpoint, make_synthetic, DatasetManifest, Split, VideoClip};
use grrn::model::ParamKind;
use grrn::training::{
    epoch_checkpoint_path, lr_at, train, ClipSource, ManifestSource, TrainPlan, Trainer,
};
use grrn::{Grrn, GrrnError, Preset};

mod common;

fn clips(count: usize, hr: usize, seed: u64) -> Vec<VideoClip> {
    common::synthetic_clips(count, hr, 2, seed)
}

fn nano(seed: u64) -> Grrn<f32> {
    Grrn::new(Preset::Nano.config(), seed).unwrap()
}

fn small_plan() -> TrainPlan {
    TrainPlan {
        milestones: vec![2, 3, 4, 5, 6],
        minibatch: 2,
        bn_freeze_epoch: 1,
        epochs: 8,
        seed: 5,
        ..TrainPlan::default()
    }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let data = clips(4, 16, 1);
    let plan = TrainPlan { minibatch: 4, augment: false, ..TrainPlan::default() };
    let mut t = Trainer::new(nano(0), data.clone(), plan).unwrap();
    let losses: Vec<f64> = (0..11).map(|_| t.step_on(&data).unwrap().loss).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

fn feeds_train_mode_bn(name: &str) -> bool {
    name.starts_with("body.") && name.ends_with("pw_out.b")
}

#[test]
fn gradients_reach_every_tensor() {
    let data = clips(4, 16, 2);
    let plan = TrainPlan { minibatch: 4, bn_freeze_epoch: 1, epochs: 2, ..TrainPlan::default() };
    let mut t = Trainer::new(nano(1), data, plan).unwrap();
    t.train_step().unwrap();
    let grads = t.last_gradients().unwrap().clone();
    let params = t.model().params().clone();
    let global = grads.global_norm();
    let mut suppressed = 0;
    for id in params.ids() {
        let e = params.entry(id);
        if e.kind == ParamKind::Statistic {
            continue;
        }
        let g = grads.get(id).max_abs() as f64;
        if feeds_train_mode_bn(&e.name) {
            // A bias followed by batch normalization over the batch is
            // cancelled by the mean subtraction.
            assert!(g < 1e-6 * global, "{}: {g}", e.name);
            suppressed += 1;
        } else {
            assert!(g > 0.0, "{} received no gradient", e.name);
        }
    }
    assert!(suppressed > 0);

    // Once frozen the same biases shift the output and get gradient.
    t.train_step().unwrap();
    assert!(t.model().is_bn_frozen());
    let grads = t.last_gradients().unwrap();
    for id in params.ids() {
        let name = &params.entry(id).name;
        if feeds_train_mode_bn(name) {
            assert!(grads.get(id).max_abs() > 0.0, "{name}");
        }
    }
}

#[test]
fn freeze_happens_once_and_pins_batch_norm() {
    let dir = tempfile::tempdir().unwrap();
    let plan = TrainPlan {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        bn_freeze_epoch: 2,
        epochs: 5,
        ..small_plan()
    };
    let mut t = Trainer::new(nano(2), clips(4, 12, 3), plan).unwrap();
    t.run().unwrap();
    let log = t.log();
    assert_eq!(log.freezes.len(), 1);
    assert_eq!(log.freezes[0].epoch, 2);
    assert_eq!(log.freezes[0].step, 4);

    let bn_bytes = |epoch: usize| -> Vec<Vec<f32>> {
        let ck = load_checkpoint(&epoch_checkpoint_path(dir.path(), epoch)).unwrap();
        ck.model
            .params()
            .entries()
            .iter()
            .filter(|e| e.kind != ParamKind::Trainable)
            .map(|e| e.value.data().to_vec())
            .collect()
    };
    // Epoch files are named by completed epochs; freezing precedes epoch 2.
    let pinned = bn_bytes(2);
    assert_ne!(bn_bytes(1), pinned);
    for e in 3..=5 {
        assert_eq!(bn_bytes(e), pinned, "epoch {e}");
    }
    assert!(load_checkpoint(&epoch_checkpoint_path(dir.path(), 5)).unwrap().model.is_bn_frozen());
}

#[test]
fn resume_mid_epoch_is_bit_identical() {
    let plan = TrainPlan { patch: Some(4), ..small_plan() };
    let data = clips(6, 12, 4);
    let mut full = Trainer::new(nano(3), data.clone(), plan.clone()).unwrap();
    for _ in 0..8 {
        full.train_step().unwrap();
    }

    let mut first = Trainer::new(nano(3), data.clone(), plan.clone()).unwrap();
    for _ in 0..4 {
        first.train_step().unwrap();
    }
    assert_eq!(first.epoch(), 1);
    let bytes = first.checkpoint().to_bytes();
    let ckpt = grrn::data::Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::from_checkpoint(ckpt, data, plan).unwrap();
    for _ in 0..4 {
        resumed.train_step().unwrap();
    }
    assert_eq!(resumed.step(), 8);
    assert_eq!(resumed.checkpoint().to_bytes(), full.checkpoint().to_bytes());
    let tail: Vec<f64> = full.log().steps[4..].iter().map(|s| s.loss).collect();
    let again: Vec<f64> = resumed.log().steps.iter().map(|s| s.loss).collect();
    assert_eq!(tail, again);
}

#[test]
fn seeds_control_the_run() {
    let run = |seed: u64| {
        let plan = TrainPlan { max_steps: Some(5), seed, ..small_plan() };
        let (model, log) = train(nano(4), clips(4, 12, 5), plan).unwrap();
        (model, log.steps.iter().map(|s| s.loss).collect::<Vec<_>>())
    };
    let (a, la) = run(1);
    let (b, lb) = run(1);
    let (_, lc) = run(2);
    assert_eq!(la, lb);
    assert_eq!(a, b);
    assert_ne!(la, lc);
}

#[test]
fn schedule_halves_five_times() {
    let plan = TrainPlan {
        milestones: vec![1, 2, 3, 4, 5],
        epochs: 8,
        bn_freeze_epoch: 1,
        minibatch: 2,
        ..TrainPlan::default()
    };
    let (_, log) = train(nano(5), clips(2, 8, 6), plan.clone()).unwrap();
    let trace = log.lr_trace();
    assert_eq!(trace.len(), 8);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(log.halvings(), 5);
    assert_eq!(*trace.last().unwrap(), plan.initial_lr / 32.0);
    for s in &log.steps {
        assert_eq!(s.lr, lr_at(s.epoch, &plan));
    }
    assert_eq!(log.epochs_csv().lines().count(), 9);
}

#[test]
fn non_finite_weights_abort_with_the_tensor_name() {
    let mut model = nano(6);
    let id = model.params().id("up.final.w").unwrap();
    model.params_mut().get_mut(id).data_mut()[0] = f32::NAN;
    let mut t = Trainer::new(model, clips(2, 8, 7), small_plan()).unwrap();
    match t.train_step() {
        Err(GrrnError::Numeric(msg)) => assert!(msg.contains("up.final.w"), "{msg}"),
        other => panic!("expected a numeric failure, got {other:?}"),
    }
}

#[test]
fn gradient_clipping_bounds_the_update() {
    let data = clips(2, 8, 8);
    let plan = TrainPlan { grad_clip: Some(1e-3), augment: false, ..small_plan() };
    let mut clipped = Trainer::new(nano(7), data.clone(), plan).unwrap();
    let rec = clipped.step_on(&data).unwrap();
    assert!(rec.grad_norm > 1e-3);
    let mut free = Trainer::new(nano(7), data.clone(), TrainPlan { augment: false, ..small_plan() }).unwrap();
    free.step_on(&data).unwrap();
    // Adam normalizes the step size, so clipping shows up in the moments.
    assert_ne!(clipped.checkpoint().optimizer.m, free.checkpoint().optimizer.m);
}

#[test]
fn rejects_unusable_data() {
    assert!(matches!(
        Trainer::new(nano(0), Vec::<VideoClip>::new(), small_plan()),
        Err(GrrnError::Validation(_))
    ));
    assert!(Trainer::new(nano(0), clips(1, 8, 0), small_plan()).is_err());
    let frozen = TrainPlan { bn_freeze_epoch: 0, minibatch: 1, ..small_plan() };
    assert!(Trainer::new(nano(0), clips(1, 8, 0), frozen).is_ok());

    let mut wrong = clips(2, 8, 0);
    wrong[1].lr_frames.truncate(5);
    wrong[1].lr_frames.pop();
    let mut t = Trainer::new(nano(0), wrong, TrainPlan { augment: false, ..small_plan() }).unwrap();
    assert!(t.train_step().is_err());
    let plan = TrainPlan { patch: Some(9), ..small_plan() };
    let mut t = Trainer::new(nano(0), clips(2, 8, 0), plan).unwrap();
    assert!(matches!(t.train_step(), Err(GrrnError::Validation(_))));
}

#[test]
fn trains_from_disk_and_writes_checkpoints() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    make_synthetic(data.path(), 3, 12, 12, 2, 9).unwrap();
    let manifest = DatasetManifest::septuplet(data.path(), Split::Train).unwrap();
    let source = ManifestSource { manifest: manifest.clone(), radius: 3, scale: 2 };
    assert_eq!(source.len(), 3);
    let plan = TrainPlan {
        epochs: 2,
        checkpoint_dir: Some(out.path().to_path_buf()),
        ..small_plan()
    };
    let mut t = Trainer::new(nano(8), source, plan)
        .unwrap()
        .with_validation(manifest, grrn::metrics::Channel::Luma);
    t.run().unwrap();
    assert_eq!(t.steps_per_epoch(), 1);
    for e in 1..=2 {
        assert!(epoch_checkpoint_path(out.path(), e).is_file());
    }
    let last = load_checkpoint(&out.path().join("last.ckpt")).unwrap();
    assert_eq!(last.step, 2);
    assert_eq!(last.epoch, 2);
    assert!(t.log().epochs.iter().all(|e| e.validation.is_some()));
    t.log().write(out.path()).unwrap();
    let steps = std::fs::read_to_string(out.path().join("train_steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 3);
}
