//! PAC-Bayes generalization certificates for small feedforward classifiers.
//!
//! The crate trains bias-free rectifier networks, builds Gaussian posteriors
//! around the trained weights from several families, and turns each posterior
//! into a valid upper bound on its expected test error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod curvature;
pub mod data;
pub mod error;
pub mod kernel;
pub mod nnet;
pub mod posterior;

pub use error::{Error, Result};
