//! Minimal reverse-mode differentiation: tensors on a tape, parameter
//! storage, finite-difference checking and SGD.

pub mod dropout;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;

pub use dropout::Dropout;
pub use gradcheck::{grad_check, grad_check_subset, relative_error, GradCheckReport};
pub use optim::{clip_global_norm, sgd_step, LrSchedule};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{sigmoid, NodeGrads, Tape, Var};
