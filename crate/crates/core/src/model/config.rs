use std::fmt::Write as _;

use crate::error::{config_err, GrrnError, Result};
use crate::layers::BnSettings;

/// Hyperparameters of one network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `s`: channel depth of the spatio-temporal feature extractor.
    pub feat_channels: usize,
    /// `S`: channel depth of the main body.
    pub body_channels: usize,
    /// `B`: residual blocks per group.
    pub blocks: usize,
    /// `G`: residual groups.
    pub groups: usize,
    /// `g`: groups of the pointwise convolutions inside each block.
    pub pw_groups: usize,
    /// Channel-attention reduction ratio.
    pub reduction_r: usize,
    /// Magnification factor.
    pub scale_r: usize,
    /// Temporal radius; the network sees `2n + 1` frames.
    pub radius: usize,
    /// Width of the upsampling module.
    pub up_channels: usize,
    pub use_channel_attention: bool,
    /// When false the groups collapse into one flat sequence of `G * B`
    /// blocks under a single global skip.
    pub use_rir: bool,
    pub bn: BnSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    GrrnS,
    Grrn,
    GrrnL,
    Nano,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::GrrnS, Preset::Grrn, Preset::GrrnL, Preset::Nano];

    pub fn name(self) -> &'static str {
        match self {
            Preset::GrrnS => "grrn-s",
            Preset::Grrn => "grrn",
            Preset::GrrnL => "grrn-l",
            Preset::Nano => "nano",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| config_err!("unknown preset {name:?} (expected grrn-s, grrn, grrn-l or nano)"))
    }

    pub fn config(self) -> ModelConfig {
        let (s, big_s, b, g_count, g, r) = match self {
            Preset::GrrnS => (12, 192, 20, 4, 3, 32),
            Preset::Grrn => (24, 256, 30, 6, 4, 32),
            Preset::GrrnL => (24, 256, 30, 11, 4, 32),
            Preset::Nano => (4, 16, 2, 2, 2, 4),
        };
        ModelConfig {
            feat_channels: s,
            body_channels: big_s,
            blocks: b,
            groups: g_count,
            pw_groups: g,
            reduction_r: r,
            scale_r: if self == Preset::Nano { 2 } else { 4 },
            radius: 3,
            up_channels: 64,
            use_channel_attention: true,
            use_rir: true,
            bn: BnSettings::default(),
        }
    }

    /// Learnable parameter totals in millions as published: (trainable, batch norm).
    pub fn published_millions(self) -> Option<(f64, f64)> {
        match self {
            Preset::GrrnS => Some((3.06, 0.06)),
            Preset::Grrn => Some((8.94, 0.19)),
            Preset::GrrnL => Some((16.05, 0.34)),
            Preset::Nano => None,
        }
    }
}

/// Keys accepted by [`ModelConfig::set`], in canonical output order.
pub const MODEL_KEYS: [&str; 13] = [
    "s",
    "S",
    "B",
    "G",
    "g",
    "reduction_r",
    "scale_r",
    "n",
    "up_channels",
    "use_channel_attention",
    "use_rir",
    "bn_momentum",
    "bn_epsilon",
];

pub(crate) fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err!("{key}: expected a non-negative integer, got {value:?}"))
}

pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_err!("{key}: expected a number, got {value:?}"))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err!("{key}: expected true or false, got {value:?}")),
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Preset::Grrn.config()
    }
}

impl ModelConfig {
    pub fn frames(&self) -> usize {
        2 * self.radius + 1
    }

    /// Channels after concatenating all temporal feature maps: `(n+1)² · s`.
    pub fn concat_channels(&self) -> usize {
        (self.radius + 1) * (self.radius + 1) * self.feat_channels
    }

    pub fn total_blocks(&self) -> usize {
        self.groups * self.blocks
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("s", self.feat_channels),
            ("S", self.body_channels),
            ("B", self.blocks),
            ("G", self.groups),
            ("g", self.pw_groups),
            ("reduction_r", self.reduction_r),
            ("up_channels", self.up_channels),
        ] {
            if v == 0 {
                return Err(config_err!("{key} must be positive"));
            }
        }
        if !self.body_channels.is_multiple_of(self.pw_groups) {
            return Err(config_err!(
                "S={} is not divisible by g={}",
                self.body_channels,
                self.pw_groups
            ));
        }
        if self.body_channels >= self.reduction_r && !self.body_channels.is_multiple_of(self.reduction_r) {
            return Err(config_err!(
                "S={} is not divisible by reduction_r={}",
                self.body_channels,
                self.reduction_r
            ));
        }
        if self.radius < 1 {
            return Err(config_err!("n must be at least 1"));
        }
        if self.scale_r < 2 {
            return Err(config_err!("scale_r must be at least 2, got {}", self.scale_r));
        }
        if !(0.0..1.0).contains(&self.bn.momentum) {
            return Err(config_err!("bn_momentum must lie in [0, 1), got {}", self.bn.momentum));
        }
        if self.bn.epsilon <= 0.0 {
            return Err(config_err!("bn_epsilon must be positive"));
        }
        Ok(())
    }

    /// Apply one `key = value` setting. `preset` replaces every field.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "preset" => *self = Preset::parse(value.trim())?.config(),
            "s" => self.feat_channels = parse_usize(key, value)?,
            "S" => self.body_channels = parse_usize(key, value)?,
            "B" => self.blocks = parse_usize(key, value)?,
            "G" => self.groups = parse_usize(key, value)?,
            "g" => self.pw_groups = parse_usize(key, value)?,
            "reduction_r" => self.reduction_r = parse_usize(key, value)?,
            "scale_r" => self.scale_r = parse_usize(key, value)?,
            "n" => self.radius = parse_usize(key, value)?,
            "up_channels" => self.up_channels = parse_usize(key, value)?,
            "use_channel_attention" => self.use_channel_attention = parse_bool(key, value)?,
            "use_rir" => self.use_rir = parse_bool(key, value)?,
            "bn_momentum" => self.bn.momentum = parse_f64(key, value)?,
            "bn_epsilon" => self.bn.epsilon = parse_f64(key, value)?,
            _ => return Err(config_err!("unknown model key {key:?}")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "s" => self.feat_channels.to_string(),
            "S" => self.body_channels.to_string(),
            "B" => self.blocks.to_string(),
            "G" => self.groups.to_string(),
            "g" => self.pw_groups.to_string(),
            "reduction_r" => self.reduction_r.to_string(),
            "scale_r" => self.scale_r.to_string(),
            "n" => self.radius.to_string(),
            "up_channels" => self.up_channels.to_string(),
            "use_channel_attention" => self.use_channel_attention.to_string(),
            "use_rir" => self.use_rir.to_string(),
            "bn_momentum" => format!("{:?}", self.bn.momentum),
            "bn_epsilon" => format!("{:?}", self.bn.epsilon),
            _ => unreachable!("unknown model key {key}"),
        }
    }

    /// `key=value` lines for every field; [`ModelConfig::from_text`] reads them back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in MODEL_KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected key=value, got {line:?}", i + 1))?;
            cfg.set(k.trim(), v).map_err(|e| match e {
                GrrnError::Config(m) => config_err!("line {}: {m}", i + 1),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
