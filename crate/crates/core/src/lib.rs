pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{GrrnError, Result};
pub use model::{Grrn, Mode, ModelConfig, Preset};
pub use tensor::{Real, Tensor};
