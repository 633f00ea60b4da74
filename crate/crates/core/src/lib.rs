pub mod analyzer;
pub mod cli;
pub mod engine;
pub mod error;
pub mod model;
pub mod quant;
pub mod tensor;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
