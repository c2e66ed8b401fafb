pub mod binfmt;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod scorer;
pub mod seed;
pub mod synthetic;
pub mod topics;
pub mod trainer;

pub use error::{Error, Result};
