use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Args, FromArgMatches, Parser, Subcommand};

use super::config::{audit_presets, resolve, CliConfig, EvalMethod, DATA_KEYS, EVAL_KEYS, TRAIN_KEYS};
use crate::data::{
    load_checkpoint, make_synthetic, read_rgb, window_indices, write_rgb, Checkpoint, DatasetLayout,
    DatasetManifest, Split,
};
use crate::error::{config_err, GrrnError, Result};
use crate::metrics::{evaluate, tta_infer, BicubicBaseline, BilinearBaseline, EvalReport, Upscaler};
use crate::model::{Grrn, Preset, MODEL_KEYS};
use crate::tensor::Tensor;
use crate::training::{ManifestSource, Trainer};

#[derive(Debug, Parser)]
#[command(name = "grrn", version, about = "Video super-resolution: train, evaluate and upscale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint or an interpolation baseline on a dataset.
    Eval(EvalArgs),
    /// Upscale a directory of frames.
    Upscale(UpscaleArgs),
    /// Print parameter counts of the presets.
    Params(ParamsArgs),
    /// Write a small synthetic septuplet dataset.
    MakeSynthetic(SyntheticArgs),
}

const BOOL_KEYS: [&str; 4] = ["use_channel_attention", "use_rir", "augment", "tta"];

fn all_keys() -> impl Iterator<Item = (&'static str, &'static str)> {
    std::iter::once(("preset", "Model options"))
        .chain(MODEL_KEYS.iter().map(|&k| (k, "Model options")))
        .chain(TRAIN_KEYS.iter().map(|&k| (k, "Training options")))
        .chain(DATA_KEYS.iter().map(|&k| (k, "Data options")))
        .chain(EVAL_KEYS.iter().map(|&k| (k, "Evaluation options")))
}

fn key_help(key: &str) -> &'static str {
    match key {
        "preset" => "grrn-s, grrn, grrn-l or nano; applied before any other key",
        "s" => "feature channels per frame in the temporal stage",
        "S" => "body width",
        "B" => "blocks per group",
        "G" => "groups in the body",
        "g" => "groups of the pointwise convolutions",
        "reduction_r" => "channel-attention reduction ratio",
        "scale_r" => "upscaling factor",
        "n" => "temporal radius; the input window is 2n+1 frames",
        "up_channels" => "width of the upsampling module",
        "use_channel_attention" => "gate blocks with channel attention",
        "use_rir" => "nest block skips inside group skips",
        "bn_momentum" => "moving-average momentum of batch norm",
        "bn_epsilon" => "batch-norm variance epsilon",
        "initial_lr" => "Adam learning rate before any halving",
        "milestones" => "five increasing epochs at which the rate halves",
        "minibatch" => "clips per step",
        "bn_freeze_epoch" => "epoch at which batch norm is frozen",
        "epochs" => "epochs to train",
        "seed" => "seed for initialization, shuffling and augmentation",
        "augment" => "random dihedral transform per minibatch",
        "patch" => "random LR crop size, or none for whole clips",
        "grad_clip" => "global gradient-norm clip, or none",
        "renorm_r_max" => "final bound of the renorm scale factor",
        "renorm_d_max" => "final bound of the renorm shift",
        "charbonnier_epsilon" => "epsilon of the Charbonnier loss",
        "max_steps" => "stop after this many steps, or none",
        "checkpoint_dir" => "where checkpoints and logs go, or none",
        "root" => "dataset root",
        "layout" => "septuplet or long-video",
        "val_root" => "dataset scored after every epoch, or none",
        "eval_split" => "train, val or test",
        "checkpoint" => "checkpoint to evaluate or upscale with",
        "tta" => "average over the eight dihedral transforms",
        "channel" => "luma, luma-studio or rgb",
        "method" => "model, bicubic or bilinear",
        "report" => "path prefix for <prefix>.txt and <prefix>.csv, or none",
        _ => "",
    }
}

/// `--config FILE` plus one `--KEY VALUE` flag for every config key.
#[derive(Clone, Debug, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let overrides = all_keys()
            .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(ConfigArgs {
            config: m.get_one::<PathBuf>("config").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let mut cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("INI file with [model] [train] [data] [eval] sections"),
        );
        for (key, heading) in all_keys() {
            let mut arg = Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help(key_help(key))
                .help_heading(heading);
            if BOOL_KEYS.contains(&key) {
                arg = arg.num_args(0..=1).default_missing_value("true");
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<CliConfig> {
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| GrrnError::io(p, e))?),
            None => None,
        };
        resolve(text.as_deref(), &self.overrides)
    }

    fn with(mut self, key: &str, value: &str) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long, value_name = "CKPT")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Score on all three colour channels (same as `--channel rgb`).
    #[arg(long)]
    pub rgb: bool,
}

#[derive(Debug, clap::Args)]
pub struct UpscaleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory of PNG frames, in file-name order.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Only upscale the middle frame.
    #[arg(long)]
    pub middle_only: bool,
}

#[derive(Debug, clap::Args)]
pub struct ParamsArgs {
    /// Only this preset (grrn-s, grrn, grrn-l or nano).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct SyntheticArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// High-resolution frame height.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// High-resolution frame width.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Process exit status for an error: 1 usage, 2 data, 3 numeric.
pub fn exit_code(e: &GrrnError) -> i32 {
    match e {
        GrrnError::Config(_) | GrrnError::State(_) => 1,
        GrrnError::Shape(_)
        | GrrnError::Validation(_)
        | GrrnError::Io { .. }
        | GrrnError::Image { .. }
        | GrrnError::Format { .. } => 2,
        GrrnError::Numeric(_) => 3,
    }
}

fn echo(cfg: &CliConfig) {
    print!("{}", cfg.to_ini());
    println!();
}

fn open_manifest(root: &Path, layout: DatasetLayout, split: Split) -> Result<DatasetManifest> {
    match layout {
        DatasetLayout::Septuplet => DatasetManifest::septuplet(root, split),
        DatasetLayout::LongVideo => DatasetManifest::long_video(root, split),
    }
}

fn data_root(cfg: &CliConfig) -> Result<&Path> {
    cfg.data
        .root
        .as_deref()
        .ok_or_else(|| config_err!("no dataset: set root in [data] or pass --root"))
}

fn load_model(cfg: &CliConfig) -> Result<Grrn<f32>> {
    let path = cfg
        .eval
        .checkpoint
        .as_deref()
        .ok_or_else(|| config_err!("no checkpoint: set checkpoint in [eval] or pass --checkpoint"))?;
    Ok(load_checkpoint(path)?.model)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    echo(&cfg);
    let manifest = open_manifest(data_root(&cfg)?, cfg.data.layout, Split::Train)?;
    let source = ManifestSource {
        manifest,
        radius: cfg.model.radius,
        scale: cfg.model.scale_r,
    };
    let ckpt = match &args.resume {
        Some(p) => {
            let c = load_checkpoint(p)?;
            if c.model.config() != &cfg.model {
                return Err(config_err!(
                    "{} was trained with a different model configuration",
                    p.display()
                ));
            }
            c
        }
        None => Checkpoint::new(Grrn::new(cfg.model.clone(), cfg.train.seed)?),
    };
    if let Some(dir) = &cfg.train.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| GrrnError::io(dir, e))?;
        let p = dir.join("config.ini");
        std::fs::write(&p, cfg.to_ini()).map_err(|e| GrrnError::io(&p, e))?;
    }
    let mut trainer = Trainer::from_checkpoint(ckpt, source, cfg.train.clone())?;
    trainer.verbose = true;
    if let Some(v) = &cfg.data.val_root {
        trainer = trainer.with_validation(open_manifest(v, cfg.data.layout, Split::Val)?, cfg.eval.channel);
    }
    let result = trainer.run();
    if let Some(dir) = &cfg.train.checkpoint_dir {
        trainer.log().write(dir)?;
    }
    result?;
    println!(
        "trained to step {} ({} epochs); final loss {}",
        trainer.step(),
        trainer.epoch(),
        trainer.log().final_loss().map_or_else(|| "n/a".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport> {
    let config = if args.rgb {
        args.config.clone().with("channel", "rgb")
    } else {
        args.config.clone()
    };
    let cfg = config.resolve()?;
    echo(&cfg);
    let manifest = open_manifest(data_root(&cfg)?, cfg.data.layout, cfg.data.eval_split)?;
    let (scale, radius) = (cfg.model.scale_r, cfg.model.radius);
    let (tta, ch) = (cfg.eval.tta, cfg.eval.channel);
    let report = match cfg.eval.method {
        EvalMethod::Model => evaluate(&load_model(&cfg)?, &manifest, tta, ch)?,
        EvalMethod::Bicubic => evaluate(&BicubicBaseline { scale, radius }, &manifest, tta, ch)?,
        EvalMethod::Bilinear => evaluate(&BilinearBaseline { scale, radius }, &manifest, tta, ch)?,
    };
    print!("{}", report.to_text());
    if let Some(prefix) = &cfg.eval.report {
        let txt = PathBuf::from(format!("{}.txt", prefix.display()));
        let csv = PathBuf::from(format!("{}.csv", prefix.display()));
        if let Some(dir) = txt.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| GrrnError::io(dir, e))?;
        }
        report.write(&txt, &csv)?;
    }
    Ok(report)
}

fn png_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| GrrnError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(GrrnError::Validation(format!("no PNG frames in {}", dir.display())));
    }
    Ok(files)
}

/// Returns the written paths.
pub fn upscale(args: &UpscaleArgs) -> Result<Vec<PathBuf>> {
    let cfg = args.config.resolve()?;
    echo(&cfg);
    let model = load_model(&cfg)?;
    let files = png_frames(&args.input)?;
    let frames = files.iter().map(|p| read_rgb(p)).collect::<Result<Vec<Tensor<f32>>>>()?;
    if let Some((p, f)) = files.iter().zip(&frames).find(|(_, f)| f.shape() != frames[0].shape()) {
        return Err(GrrnError::Validation(format!(
            "{} is {:?}, other frames are {:?}",
            p.display(),
            f.shape(),
            frames[0].shape()
        )));
    }
    let total = frames.len();
    let targets: Vec<usize> = if args.middle_only {
        vec![total / 2]
    } else {
        (0..total).collect()
    };
    let mut written = Vec::with_capacity(targets.len());
    for t in targets {
        let window: Vec<Tensor<f32>> = window_indices(t, total, model.radius())
            .into_iter()
            .map(|i| frames[i].clone())
            .collect();
        let out = if cfg.eval.tta {
            tta_infer(&model, &window)?
        } else {
            model.upscale(&window)?
        };
        let path = args.output.join(files[t].file_name().expect("listed files have names"));
        write_rgb(&path, &out)?;
        written.push(path);
    }
    println!("wrote {} frame(s) to {}", written.len(), args.output.display());
    Ok(written)
}

fn millions(n: usize) -> String {
    format!("{:.2}M", n as f64 / 1e6)
}

fn deviation(ours: usize, published_millions: f64) -> String {
    format!("{:+.1}%", (ours as f64 / (published_millions * 1e6) - 1.0) * 100.0)
}

/// One line per preset: learnable counts, published counts and deviation.
pub fn params_table(only: Option<Preset>) -> Result<String> {
    let mut out = format!(
        "{:<8}  {:>20}  {:>24}  {:>18}  {}\n",
        "preset", "trainable + (bn)", "exact", "published", "deviation"
    );
    for p in audit_presets(only) {
        let c = Grrn::<f32>::new(p.config(), 0)?.counts();
        let ours = format!("{} + ({})", millions(c.trainable), millions(c.batchnorm));
        let exact = format!("{} + ({})", c.trainable, c.batchnorm);
        let (published, dev) = match p.published_millions() {
            Some((t, b)) => (
                format!("{t:.2}M + ({b:.2}M)"),
                format!("{} / {}", deviation(c.trainable, t), deviation(c.batchnorm, b)),
            ),
            None => ("-".to_string(), "-".to_string()),
        };
        out.push_str(&format!("{:<8}  {ours:>20}  {exact:>24}  {published:>18}  {dev}\n", p.name()));
    }
    Ok(out)
}

pub fn params(args: &ParamsArgs) -> Result<()> {
    let only = args.preset.as_deref().map(Preset::parse).transpose()?;
    print!("{}", params_table(only)?);
    Ok(())
}

pub fn synthetic(args: &SyntheticArgs) -> Result<()> {
    let m = make_synthetic(&args.out, args.count, args.height, args.width, args.scale, args.seed)?;
    println!(
        "wrote {} clips of {}x{} (scale {}) to {}",
        m.len(),
        args.height,
        args.width,
        args.scale,
        args.out.display()
    );
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a).map(|_| ()),
        Command::Upscale(a) => upscale(a).map(|_| ()),
        Command::Params(a) => params(a),
        Command::MakeSynthetic(a) => synthetic(a),
    }
}
