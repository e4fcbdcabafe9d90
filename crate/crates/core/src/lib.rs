//! Stacked-hourglass keypoint estimation trained against a self-adversarial
//! hourglass discriminator.
//!
//! Everything numeric is generic over [`Scalar`]; the `*64` / `*32` aliases
//! below pin the common instantiations.

pub mod adversarial;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod rng;
pub mod scalar;
pub mod network;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use network::{HourglassNet, NetworkConfig};
pub use tensor::{BatchNormMode, ParamId, ParamStore, Tape, Tensor, Var};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type HourglassNet64 = HourglassNet<f64>;
pub type HourglassNet32 = HourglassNet<f32>;
