use std::path::Path;
use std::process::{Command, Output};

use grrn::cli::{params_table, resolve, CliConfig};
use grrn::data::{load_checkpoint, make_synthetic, read_rgb};
use grrn::Preset;

fn grrn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grrn"))
        .args(args)
        .current_dir(cwd)
        .env("GRRN_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn params_lists_presets_with_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let o = grrn(&["params"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["grrn-s", "grrn ", "grrn-l"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{text}");
    }
    assert_eq!(text, params_table(None).unwrap());
    let nano = params_table(Some(Preset::Nano)).unwrap();
    assert_eq!(nano.lines().count(), 2);
    assert!(nano.lines().nth(1).unwrap().trim_end().ends_with('-'));
}

#[test]
fn echoed_config_resolves_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    make_synthetic(&dir.path().join("data"), 2, 16, 16, 2, 0).unwrap();
    std::fs::write(dir.path().join("run.ini"), "[model]\npreset = nano\n[eval]\nmethod = bicubic\n").unwrap();
    let o = grrn(&["eval", "-c", "run.ini", "--root", "data", "--scale_r", "2", "--rgb"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let at = text.find("method: ").unwrap();
    let (ini, report) = text.split_at(at);
    let echoed = resolve(Some(ini), &[]).unwrap();
    assert_eq!(echoed.to_ini().trim_end(), ini.trim_end());
    assert_eq!(echoed.model, Preset::Nano.config());
    assert_eq!(echoed.eval.channel.name(), "rgb");
    assert!(report.contains("method: bicubic"), "{report}");
    assert_ne!(echoed, CliConfig::default());
}

#[test]
fn train_eval_upscale_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    assert!(grrn(&["make-synthetic", "--out", "data", "--count", "3", "--height", "16", "--width", "20"], cwd)
        .status
        .success());
    let o = grrn(
        &[
            "train", "--preset", "nano", "--root", "data", "--epochs", "2", "--B", "2", "--bn_freeze_epoch", "1",
            "--milestones", "1,2,3,4,5", "--checkpoint_dir", "ck", "--val_root", "data",
        ],
        cwd,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = load_checkpoint(&cwd.join("ck/last.ckpt")).unwrap();
    assert_eq!((ck.step, ck.epoch), (2, 2));
    assert!(ck.model.is_bn_frozen());
    let saved = std::fs::read_to_string(cwd.join("ck/config.ini")).unwrap();
    assert_eq!(resolve(Some(&saved), &[]).unwrap().model, Preset::Nano.config());
    let epochs = std::fs::read_to_string(cwd.join("ck/train_epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);

    let o = grrn(&["eval", "--root", "data", "--checkpoint", "ck/last.ckpt", "--tta", "--report", "out/r"], cwd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("grrn+tta"));
    let csv = std::fs::read_to_string(cwd.join("out/r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let frames = cwd.join("data/sequences/synth000/0001");
    let o = grrn(&["upscale", "--checkpoint", "ck/last.ckpt", "--input", frames.to_str().unwrap(), "--output", "up"], cwd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<_> = std::fs::read_dir(cwd.join("up")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    assert_eq!(read_rgb(&cwd.join("up/im4.png")).unwrap().shape(), &[32, 40, 3]);
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    assert_eq!(grrn(&["train", "--B", "x"], cwd).status.code(), Some(1));
    assert_eq!(grrn(&["eval", "--bogus"], cwd).status.code(), Some(1));
    assert_eq!(grrn(&["train"], cwd).status.code(), Some(1));
    let o = grrn(&["eval", "--root", "missing", "--method", "bicubic"], cwd);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
    std::fs::write(cwd.join("bad.ini"), "[model]\nS = 12\nwidth = 3\n").unwrap();
    let o = grrn(&["params", "--preset", "huge"], cwd);
    assert_eq!(o.status.code(), Some(1));
    let o = grrn(&["eval", "-c", "bad.ini"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(grrn(&["--help"], cwd).status.code(), Some(0));
}
