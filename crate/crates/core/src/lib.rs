//! Spectral method-of-moments inference for spherical Gaussian mixtures and
//! LDA, with regularization through optimized pseudo-data.

pub mod data;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod regularizers;
pub mod rtdm;

pub use error::{Error, Result};
