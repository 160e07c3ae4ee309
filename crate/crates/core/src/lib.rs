//! Plug-and-play ADMM for linear image inverse problems with a
//! Gaussian-mixture patch prior.

pub mod error;
pub mod gmm;
pub mod image;
pub mod metrics;
pub mod denoiser;
pub mod operators;
pub mod admm;
pub mod bench;
mod linalg;

pub use error::{Error, Result};
