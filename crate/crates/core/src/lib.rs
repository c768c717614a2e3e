pub mod error;
pub mod fourier;
pub mod gradcheck;
pub mod harness;
pub mod imageio;
pub mod layers;
pub mod losses;
pub mod maps;
pub mod metrics;
pub mod networks;
pub mod norms;
pub mod resfft;
pub mod synthdata;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{no_grad, Param, ParamSet, Tensor};
