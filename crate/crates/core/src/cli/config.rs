use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{DatasetLayout, Split};
use crate::error::{config_err, GrrnError, Result};
use crate::metrics::Channel;
use crate::model::{parse_bool, parse_f64, parse_usize, ModelConfig, Preset, MODEL_KEYS};
use crate::training::TrainPlan;

pub const SECTIONS: [&str; 4] = ["model", "train", "data", "eval"];

pub const TRAIN_KEYS: [&str; 14] = [
    "initial_lr",
    "milestones",
    "minibatch",
    "bn_freeze_epoch",
    "epochs",
    "seed",
    "augment",
    "patch",
    "grad_clip",
    "renorm_r_max",
    "renorm_d_max",
    "charbonnier_epsilon",
    "max_steps",
    "checkpoint_dir",
];

pub const DATA_KEYS: [&str; 4] = ["root", "layout", "val_root", "eval_split"];

pub const EVAL_KEYS: [&str; 5] = ["checkpoint", "tta", "channel", "method", "report"];

/// What `eval` scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMethod {
    Model,
    Bicubic,
    Bilinear,
}

impl EvalMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(EvalMethod::Model),
            "bicubic" => Ok(EvalMethod::Bicubic),
            "bilinear" => Ok(EvalMethod::Bilinear),
            _ => Err(config_err!("unknown method {s:?} (model, bicubic or bilinear)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvalMethod::Model => "model",
            EvalMethod::Bicubic => "bicubic",
            EvalMethod::Bilinear => "bilinear",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    pub layout: DatasetLayout,
    /// Scored after every training epoch when set.
    pub val_root: Option<PathBuf>,
    pub eval_split: Split,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            layout: DatasetLayout::Septuplet,
            val_root: None,
            eval_split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    pub tta: bool,
    pub channel: Channel,
    pub method: EvalMethod,
    /// Report path prefix; `.txt` and `.csv` are appended.
    pub report: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: None,
            tta: false,
            channel: Channel::Luma,
            method: EvalMethod::Model,
            report: None,
        }
    }
}

/// Fully resolved settings of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub model: ModelConfig,
    pub train: TrainPlan,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            model: ModelConfig::default(),
            train: TrainPlan {
                checkpoint_dir: Some(PathBuf::from("checkpoints")),
                ..TrainPlan::default()
            },
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Section owning `key`, if any.
pub fn section_of(key: &str) -> Option<&'static str> {
    if key == "preset" || MODEL_KEYS.contains(&key) {
        Some("model")
    } else if TRAIN_KEYS.contains(&key) {
        Some("train")
    } else if DATA_KEYS.contains(&key) {
        Some("data")
    } else if EVAL_KEYS.contains(&key) {
        Some("eval")
    } else {
        None
    }
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then_some(v)
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s.trim())
}

fn parse_layout(s: &str) -> Result<DatasetLayout> {
    match s.trim() {
        "septuplet" => Ok(DatasetLayout::Septuplet),
        "long-video" => Ok(DatasetLayout::LongVideo),
        other => Err(config_err!("layout: expected septuplet or long-video, got {other:?}")),
    }
}

fn layout_name(l: DatasetLayout) -> &'static str {
    match l {
        DatasetLayout::Septuplet => "septuplet",
        DatasetLayout::LongVideo => "long-video",
    }
}

fn parse_milestones(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|p| parse_usize("milestones", p))
        .collect()
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

fn opt_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl CliConfig {
    /// Apply one setting. The section must own the key.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match section_of(key) {
            Some(s) if s == section => {}
            Some(s) => return Err(config_err!("{key} belongs in [{s}], not [{section}]")),
            None => return Err(config_err!("unknown key {key:?} in [{section}]")),
        }
        let t = &mut self.train;
        match key {
            "initial_lr" => t.initial_lr = parse_f64(key, value)?,
            "milestones" => t.milestones = parse_milestones(value)?,
            "minibatch" => t.minibatch = parse_usize(key, value)?,
            "bn_freeze_epoch" => t.bn_freeze_epoch = parse_usize(key, value)?,
            "epochs" => t.epochs = parse_usize(key, value)?,
            "seed" => {
                t.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| config_err!("seed: expected an unsigned integer, got {value:?}"))?
            }
            "augment" => t.augment = parse_bool(key, value)?,
            "patch" => t.patch = optional(value).map(|v| parse_usize(key, v)).transpose()?,
            "grad_clip" => t.grad_clip = optional(value).map(|v| parse_f64(key, v)).transpose()?,
            "renorm_r_max" => t.renorm_r_max = parse_f64(key, value)?,
            "renorm_d_max" => t.renorm_d_max = parse_f64(key, value)?,
            "charbonnier_epsilon" => t.charbonnier_epsilon = parse_f64(key, value)?,
            "max_steps" => {
                t.max_steps = optional(value)
                    .map(|v| parse_usize(key, v).map(|n| n as u64))
                    .transpose()?
            }
            "checkpoint_dir" => t.checkpoint_dir = optional(value).map(PathBuf::from),
            "root" => self.data.root = optional(value).map(PathBuf::from),
            "layout" => self.data.layout = parse_layout(value)?,
            "val_root" => self.data.val_root = optional(value).map(PathBuf::from),
            "eval_split" => self.data.eval_split = parse_split(value)?,
            "checkpoint" => self.eval.checkpoint = optional(value).map(PathBuf::from),
            "tta" => self.eval.tta = parse_bool(key, value)?,
            "channel" => self.eval.channel = Channel::parse(value.trim())?,
            "method" => self.eval.method = EvalMethod::parse(value.trim())?,
            "report" => self.eval.report = optional(value).map(PathBuf::from),
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// INI text listing every key; parsing it reproduces `self`.
    pub fn to_ini(&self) -> String {
        let mut out = String::from("[model]\n");
        out.push_str(&self.model.to_text());
        let t = &self.train;
        let milestones: Vec<String> = t.milestones.iter().map(ToString::to_string).collect();
        let _ = write!(
            out,
            "\n[train]\ninitial_lr={:?}\nmilestones={}\nminibatch={}\nbn_freeze_epoch={}\nepochs={}\nseed={}\n\
             augment={}\npatch={}\ngrad_clip={}\nrenorm_r_max={:?}\nrenorm_d_max={:?}\ncharbonnier_epsilon={:?}\n\
             max_steps={}\ncheckpoint_dir={}\n",
            t.initial_lr,
            milestones.join(","),
            t.minibatch,
            t.bn_freeze_epoch,
            t.epochs,
            t.seed,
            t.augment,
            opt_string(&t.patch),
            t.grad_clip.map_or_else(|| "none".to_string(), |c| format!("{c:?}")),
            t.renorm_r_max,
            t.renorm_d_max,
            t.charbonnier_epsilon,
            opt_string(&t.max_steps),
            opt_path(&t.checkpoint_dir),
        );
        let d = &self.data;
        let _ = write!(
            out,
            "\n[data]\nroot={}\nlayout={}\nval_root={}\neval_split={}\n",
            opt_path(&d.root),
            layout_name(d.layout),
            opt_path(&d.val_root),
            d.eval_split
        );
        let e = &self.eval;
        let _ = write!(
            out,
            "\n[eval]\ncheckpoint={}\ntta={}\nchannel={}\nmethod={}\nreport={}\n",
            opt_path(&e.checkpoint),
            e.tta,
            e.channel.name(),
            e.method.name(),
            opt_path(&e.report)
        );
        out
    }
}

/// One `key = value` line of a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Split INI text into settings. Comments start with `#` or `;`.
pub fn read_settings(text: &str) -> Result<Vec<Setting>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = i + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(config_err!("line {n}: unknown section [{name}]"));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err!("line {n}: expected key=value, got {line:?}"))?;
        let key = k.trim().to_string();
        let section = match &section {
            Some(s) => s.clone(),
            None => section_of(&key)
                .ok_or_else(|| config_err!("line {n}: unknown key {key:?}"))?
                .to_string(),
        };
        out.push(Setting {
            section,
            key,
            value: v.trim().to_string(),
            line: n,
        });
    }
    Ok(out)
}

fn with_line(line: usize, e: GrrnError) -> GrrnError {
    match e {
        GrrnError::Config(m) => config_err!("line {line}: {m}"),
        other => other,
    }
}

/// Resolve a config: defaults, then a `preset` (from `overrides` if given
/// there, else from the file), then the file's other keys in order, then
/// `overrides` as `(key, value)` pairs. The result is validated.
pub fn resolve(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<CliConfig> {
    let settings = match file_text {
        Some(t) => read_settings(t)?,
        None => Vec::new(),
    };
    let mut cfg = CliConfig::default();
    let flag_preset = overrides.iter().rev().find(|(k, _)| k == "preset");
    if let Some((_, v)) = flag_preset {
        cfg.set("model", "preset", v)?;
    } else if let Some(s) = settings.iter().rev().find(|s| s.key == "preset") {
        cfg.set(&s.section, "preset", &s.value).map_err(|e| with_line(s.line, e))?;
    }
    for s in settings.iter().filter(|s| s.key != "preset") {
        cfg.set(&s.section, &s.key, &s.value).map_err(|e| with_line(s.line, e))?;
    }
    for (k, v) in overrides.iter().filter(|(k, _)| k != "preset") {
        let section = section_of(k).ok_or_else(|| config_err!("unknown option --{k}"))?;
        cfg.set(section, k, v).map_err(|e| match e {
            GrrnError::Config(m) => config_err!("--{k}: {m}"),
            other => other,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Presets whose counts `params` prints.
pub fn audit_presets(only: Option<Preset>) -> Vec<Preset> {
    match only {
        Some(p) => vec![p],
        None => vec![Preset::GrrnS, Preset::Grrn, Preset::GrrnL],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_then_override() {
        let cfg = resolve(Some("[model]\nG=2\npreset=grrn-s\n"), &[]).unwrap();
        let m = &cfg.model;
        assert_eq!(
            (m.feat_channels, m.body_channels, m.blocks, m.groups, m.pw_groups, m.reduction_r),
            (12, 192, 20, 2, 3, 32)
        );
    }

    #[test]
    fn errors_name_key_and_line() {
        let err = resolve(Some("[model]\nS=192\n\ng=abc\n"), &[]).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("g:"), "{err}");
        let err = resolve(Some("[train]\nbogus=1\n"), &[]).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        let err = resolve(Some("[train]\nS=16\n"), &[]).unwrap_err().to_string();
        assert!(err.contains("[model]"), "{err}");
        let err = resolve(Some("[nope]\n"), &[]).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");
        let err = resolve(Some("[model]\ng=5\nS=192\n"), &[]).unwrap_err().to_string();
        assert!(err.contains("divisible"), "{err}");
    }

    #[test]
    fn flags_win_over_file() {
        let overrides = vec![("G".to_string(), "3".to_string()), ("epochs".to_string(), "7".to_string())];
        let cfg = resolve(Some("preset=nano\nG=1\nepochs=2\n"), &overrides).unwrap();
        assert_eq!(cfg.model.groups, 3);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.model.body_channels, 16);
        let flag_preset = vec![("preset".to_string(), "grrn-l".to_string())];
        let cfg = resolve(Some("[model]\npreset=nano\n"), &flag_preset).unwrap();
        assert_eq!(cfg.model, Preset::GrrnL.config());
    }

    #[test]
    fn echo_round_trips() {
        let text = "[model]\npreset=nano\nuse_rir=false\n[train]\nmilestones=3,4,5,6,7\npatch=8\ngrad_clip=0.5\n\
                    max_steps=9\n[data]\nroot=/tmp/x\nlayout=long-video\n[eval]\ntta=true\nchannel=rgb\nmethod=bicubic\n";
        let cfg = resolve(Some(text), &[]).unwrap();
        let echoed = cfg.to_ini();
        assert_eq!(resolve(Some(&echoed), &[]).unwrap(), cfg);
        assert_eq!(resolve(Some(&CliConfig::default().to_ini()), &[]).unwrap(), CliConfig::default());
    }
}
