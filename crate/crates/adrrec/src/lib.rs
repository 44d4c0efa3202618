//! File formats, checkpoints, parallel execution and the command-line
//! front end for `adrrec-core`.

pub mod binio;
pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config_io;
pub mod data;
pub mod error;
pub mod formats;
pub mod parallel;

pub use error::{AppError, AppResult};
