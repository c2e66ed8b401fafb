//! Dense matrices, a reverse-mode tape, finite-difference checking and Adam.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_samples, GradSample};
pub use optim::{clip_scale, Adam, AdamConfig};
pub use tape::{log_sum_exp, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
