//! Command-line front end: config resolution and the five commands.

mod commands;
mod config;

pub use commands::{
    dispatch, eval, exit_code, params, params_table, synthetic, train, upscale, Cli, Command, ConfigArgs, EvalArgs,
    ParamsArgs, SyntheticArgs, TrainArgs, UpscaleArgs,
};
pub use config::{
    read_settings, resolve, section_of, CliConfig, DataConfig, EvalConfig, EvalMethod, Setting, DATA_KEYS, EVAL_KEYS,
    SECTIONS, TRAIN_KEYS,
};
