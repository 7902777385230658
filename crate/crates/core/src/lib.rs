pub mod augment;
pub mod bench;
pub mod cli;
pub mod error;
pub mod infer;
pub mod lgm;
pub mod modelspec;
pub mod numkernel;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
