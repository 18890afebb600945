//! Numerical primitives: Gaussian KL divergences and samplers, the Catoni
//! inversion and the penalty terms of a valid empirical bound.

pub mod bound;
pub mod gaussian;
pub mod rng;

pub use bound::{catoni_inv, chernoff_gap, union_bound_nats, PenaltyTerms};
pub use gaussian::{kl_block, kl_diag, sample_gaussian, BlockGaussian, CovBlock, DiagGaussian, GaussianPosterior};
pub use rng::{derive_path, derive_seed, rng_from};
