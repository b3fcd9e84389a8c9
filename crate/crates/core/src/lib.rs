pub mod augment;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use autodiff::{Tape, Var};
pub use error::{Error, ErrorClass, Result};
pub use tensor::{Scalar, Tensor};
