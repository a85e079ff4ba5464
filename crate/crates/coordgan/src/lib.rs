//! Files, metrics and the command line around `coordgan-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod frechet;
pub mod ingest;
pub mod ppm;
pub mod run;

pub use error::{AppError, Result};
