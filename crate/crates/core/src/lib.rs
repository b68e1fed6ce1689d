//! Polarization image fusion: Stokes processing, a luminance-aware fusion
//! network trained with a composite loss, and fusion-quality metrics.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod plane;
pub mod stokes;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use plane::Plane;
pub use tensor::{Real, Tensor, TensorError, Var};
