#![no_std]
//! Core of the adrrec sequential recommender: corpus preparation, time and
//! position kernels, the mix-attention encoder with noisy input projection,
//! training, and ranking evaluation. Everything here is `no_std` + `alloc`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod gradcheck;
pub mod kernels;
pub mod matrix;
pub mod model;
pub mod noisereg;
pub mod rng;
pub mod synthetic;
pub mod tape;
pub mod training;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{Model, ModelConfig};
