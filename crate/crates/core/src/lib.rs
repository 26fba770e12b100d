pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rollout;
pub mod tensor;
pub mod train;

pub use autodiff::{ParamId, ParamStore, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
