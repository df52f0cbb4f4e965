pub mod autodiff;
pub mod cli;
pub mod diagnostics;
mod error;
pub mod objective;
pub mod solvers;
pub mod supernet;

pub use error::{Error, Result};
