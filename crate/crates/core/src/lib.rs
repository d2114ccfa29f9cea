pub mod attacks;
pub mod autodiff;
pub mod checkpoint;
pub mod codec;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod inn;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod predict;
pub mod scalar;
pub mod selftest;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
