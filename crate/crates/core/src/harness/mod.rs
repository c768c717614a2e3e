//! Training, evaluation, generation and ablation orchestration.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod optim;
pub mod train;

pub use ablate::{ablate, Variant};
pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use eval::{evaluate, generate};
pub use train::{train, Models, Trainer};
