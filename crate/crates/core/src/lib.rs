pub mod config;
pub mod crossmodal;
pub mod data;
pub mod decoupling;
pub mod error;
pub mod fusion;
pub mod graph_distillation;
pub mod harness;
pub mod modality;
pub mod model;
pub mod params;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use config::{AlignMode, LossWeights, LrSchedule, ModelConfig, Toggles, TrainConfig};
pub use error::{DmdError, Result};
pub use modality::Modality;
pub use params::ParamStore;
pub use tensor::{Tape, Tensor, Var};
