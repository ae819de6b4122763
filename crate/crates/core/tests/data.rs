#![allow(clippy::excessive_precision)]

use grrn::data::{
    bicubic_downsample, bicubic_upsample, load_checkpoint, load_clip, make_synthetic, quantize_tensor, read_rgb,
    resize_bicubic, save_checkpoint, stack_time, window_indices, write_rgb, Checkpoint, DatasetLayout,
    DatasetManifest, Split, FORMAT_VERSION,
};
use grrn::model::Grrn;
use grrn::training::{adam_step, OptimizerState};
use grrn::{GrrnError, Mode, Preset, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

include!("fixtures/pillow_bicubic.rs");

fn formula_image(h: usize, w: usize) -> Tensor<f32> {
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data.push(((y * 37 + x * 91 + c * 53 + ((x * y) % 17) * 7) % 256) as f32);
            }
        }
    }
    Tensor::new(&[h, w, 3], data).unwrap()
}

fn assert_within_one_level(ours: &Tensor<f32>, reference: &[u8]) {
    assert_eq!(ours.len(), reference.len());
    let q = quantize_tensor(ours);
    for (i, (&a, &b)) in q.data().iter().zip(reference).enumerate() {
        assert!((a - b as f32).abs() <= 1.0, "element {i}: {a} vs pillow {b}");
    }
}

#[test]
fn bicubic_matches_pillow_downscale() {
    let img = formula_image(16, 12);
    assert_within_one_level(&bicubic_downsample(&img, 2).unwrap(), &PIL_16X12_TO_8X6);
    assert_within_one_level(&bicubic_downsample(&img, 4).unwrap(), &PIL_16X12_TO_4X3);
}

fn assert_close(ours: &Tensor<f32>, reference: &[f32], tol: f32) {
    assert_eq!(ours.len(), reference.len());
    for (i, (&a, &b)) in ours.data().iter().zip(reference).enumerate() {
        assert!((a - b).abs() <= tol, "element {i}: {a} vs pillow {b}");
    }
}

#[test]
fn bicubic_matches_pillow_float_resize() {
    // Values overshoot [0, 255] here; no clamping is expected before quantization.
    assert_close(&bicubic_upsample(&formula_image(4, 5), 2).unwrap(), &PIL_F_4X5_TO_8X10, 1e-2);
    assert_close(&bicubic_downsample(&formula_image(16, 12), 4).unwrap(), &PIL_F_16X12_TO_4X3, 1e-2);
}

#[test]
fn bicubic_is_linear_and_preserves_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = Tensor::<f32>::random_uniform(&[12, 8, 3], 0.0, 255.0, &mut rng);
    let b = Tensor::<f32>::random_uniform(&[12, 8, 3], 0.0, 255.0, &mut rng);
    let sum = resize_bicubic(&a.add(&b).unwrap(), 5, 7).unwrap();
    let parts = resize_bicubic(&a, 5, 7).unwrap().add(&resize_bicubic(&b, 5, 7).unwrap()).unwrap();
    assert!(sum.max_abs_diff(&parts).unwrap() < 1e-3);
    let c = Tensor::full(&[9, 6, 3], 77.0f32);
    for (h, w) in [(3, 2), (18, 12), (4, 11)] {
        let r = resize_bicubic(&c, h, w).unwrap();
        assert!(r.data().iter().all(|&v| (v - 77.0).abs() < 1e-4));
    }
}

#[test]
fn downsample_needs_divisible_size() {
    let img = formula_image(10, 8);
    assert!(matches!(bicubic_downsample(&img, 4), Err(GrrnError::Validation(_))));
}

#[test]
fn window_replicates_edges() {
    assert_eq!(window_indices(0, 10, 3), vec![0, 0, 0, 0, 1, 2, 3]);
    assert_eq!(window_indices(5, 10, 3), vec![2, 3, 4, 5, 6, 7, 8]);
    assert_eq!(window_indices(9, 10, 3), vec![6, 7, 8, 9, 9, 9, 9]);
    assert_eq!(window_indices(0, 1, 1), vec![0, 0, 0]);
}

#[test]
fn stack_time_interleaves_frames() {
    let f: Vec<Tensor<f32>> = (0..3).map(|t| Tensor::full(&[2, 2, 3], t as f32)).collect();
    let s = stack_time(&f);
    assert_eq!(s.shape(), &[2, 2, 3, 3]);
    assert_eq!(s.at(&[1, 0, 2, 1]), 2.0);
    assert_eq!(s.at(&[0, 1, 0, 0]), 0.0);
}

#[test]
fn png_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let msg = read_rgb(&missing).unwrap_err().to_string();
    assert!(msg.contains("nope.png"), "{msg}");
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"not a png").unwrap();
    assert!(matches!(read_rgb(&bad), Err(GrrnError::Image { .. })));
}

#[test]
fn synthetic_dataset_layout_and_degradation() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_synthetic(dir.path(), 3, 16, 24, 2, 11).unwrap();
    assert_eq!(m.len(), 3);
    let train = DatasetManifest::septuplet(dir.path(), Split::Train).unwrap();
    let val = DatasetManifest::septuplet(dir.path(), Split::Val).unwrap();
    assert_eq!(train.entries, m.entries);
    assert_eq!(val.entries, m.entries);

    let clip = load_clip(&train, 1, 3, 2).unwrap();
    assert_eq!(clip.lr_frames.len(), 7);
    assert_eq!(clip.hr_target.shape(), &[16, 24, 3]);
    let expected = quantize_tensor(&bicubic_downsample(&clip.hr_target, 2).unwrap());
    assert_eq!(clip.lr_middle(), &expected);

    // Without stored LR copies the loader synthesizes the same frames.
    std::fs::remove_dir_all(dir.path().join("sequences_lr")).unwrap();
    let again = load_clip(&train, 1, 3, 2).unwrap();
    assert_eq!(again, clip);

    let r1 = load_clip(&train, 0, 1, 2).unwrap();
    assert_eq!(r1.lr_frames.len(), 3);
    assert_eq!(r1.lr_frames[0], load_clip(&train, 0, 3, 2).unwrap().lr_frames[2]);
    assert!(load_clip(&train, 0, 4, 2).is_err());
    assert!(load_clip(&train, 3, 3, 2).is_err());
}

#[test]
fn manifest_lists_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_synthetic(dir.path(), 2, 8, 8, 2, 0).unwrap();
    let path = dir.path().join("list.txt");
    m.write_list(&path).unwrap();
    let back = DatasetManifest::read_list(dir.path(), &path, Split::Train, DatasetLayout::Septuplet).unwrap();
    assert_eq!(back, m);
    assert_eq!(m.sequence_of(1), "synth001");
    assert!(DatasetManifest::septuplet(dir.path().join("absent"), Split::Test).is_err());
}

#[test]
fn long_video_windows() {
    let dir = tempfile::tempdir().unwrap();
    let video = dir.path().join("walk");
    for t in 0..4 {
        write_rgb(&video.join(grrn::data::frame_name(t)), &Tensor::full(&[8, 8, 3], (t * 40) as f32)).unwrap();
    }
    let m = DatasetManifest::long_video(dir.path(), Split::Test).unwrap();
    assert_eq!(m.entries, vec!["walk@0", "walk@1", "walk@2", "walk@3"]);
    let clip = load_clip(&m, 0, 3, 2).unwrap();
    assert_eq!(clip.lr_frames[0].at(&[0, 0, 0]), 0.0);
    assert_eq!(clip.lr_frames[6].at(&[0, 0, 0]), 120.0);
    assert_eq!(clip.hr_target.shape(), &[8, 8, 3]);
    assert_eq!(m.sequence_of(2), "walk");
}

fn trained_checkpoint() -> Checkpoint {
    let model = Grrn::<f32>::new(Preset::Nano.config(), 3).unwrap();
    let mut ckpt = Checkpoint::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut grads = grrn::model::ParamGrads::zeros_like(ckpt.model.params());
    for id in ckpt.model.params().ids().collect::<Vec<_>>() {
        for v in grads.get_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut opt: OptimizerState<f32> = ckpt.optimizer.clone();
    adam_step(ckpt.model.params_mut(), &grads, &mut opt, 1e-3, false).unwrap();
    ckpt.optimizer = opt;
    ckpt.step = 17;
    ckpt.epoch = 2;
    ckpt
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let ckpt = trained_checkpoint();
    let bytes = ckpt.to_bytes();
    assert_eq!(&bytes[..4], b"GRRN");
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("m.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let loaded = load_checkpoint(&path).unwrap();
    let x = Tensor::<f32>::random_uniform(&[6, 5, 7, 3], 0.0, 255.0, &mut ChaCha8Rng::seed_from_u64(2));
    assert_eq!(
        loaded.model.forward(&x, Mode::Eval).unwrap(),
        ckpt.model.forward(&x, Mode::Eval).unwrap()
    );
}

#[test]
fn checkpoint_rejects_damage() {
    let bytes = trained_checkpoint().to_bytes();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(GrrnError::Format { .. })),
            "truncated at {cut}"
        );
    }
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(GrrnError::Format { offset: 0, .. })));
    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&version).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");
    let mut trailing = bytes;
    trailing.push(0);
    assert!(Checkpoint::from_bytes(&trailing).is_err());

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(&dir.path().join("none.ckpt")), Err(GrrnError::Io { .. })));
}
