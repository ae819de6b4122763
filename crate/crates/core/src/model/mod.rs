//! Network assembly: configuration, parameter storage, forward and backward.

mod config;
mod network;
mod params;

pub use config::{ModelConfig, Preset, MODEL_KEYS};
pub(crate) use config::{parse_bool, parse_f64, parse_usize};
pub use network::{middle_frame, BnRef, ForwardTrace, Grrn, Mode, ShapeLedger, FINAL_GAMMA_INIT, INPUT_SCALE};
pub use params::{ParamCounts, ParamEntry, ParamGrads, ParamId, ParamKind, ParamStore};
