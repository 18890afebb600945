use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, stream};
use crate::kernel::GaussianPosterior;
use crate::nnet::{dataset_loss, LossKind, NetSpec, ParamVector};

/// Monte Carlo estimate of the posterior's 01-error.
#[derive(Clone, Debug, PartialEq)]
pub struct McRisk {
    pub mean: f64,
    /// 01-error of each sampled classifier, in draw order.
    pub per_sample: Vec<f64>,
}

impl McRisk {
    pub fn std_error(&self) -> f64 {
        let m = self.per_sample.len() as f64;
        if m < 2.0 {
            return 0.0;
        }
        let var = self.per_sample.iter().map(|v| (v - self.mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    }
}

/// Seed of draw `i`.
pub fn draw_seed(seed: u64, i: usize) -> u64 {
    derive_seed(derive_seed(seed, stream::MONTE_CARLO), i as u64)
}

/// Mean 01-error over `m` sampled weight vectors. Draws run in parallel and
/// are reduced in draw order.
pub fn mc_empirical_risk(
    posterior: &GaussianPosterior,
    spec: &NetSpec,
    x: ArrayView2<f64>,
    labels: &[usize],
    m: usize,
    seed: u64,
) -> Result<McRisk> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if posterior.mean().len() != spec.num_params() {
        return Err(Error::DimensionMismatch { expected: spec.num_params(), got: posterior.mean().len() });
    }
    let layout = spec.layout();
    let per_sample = (0..m)
        .into_par_iter()
        .map(|i| {
            let theta = ParamVector::new(layout.clone(), posterior.sample(draw_seed(seed, i)))?;
            dataset_loss(spec, &theta, x, labels, LossKind::ZeroOne)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_sample.iter().sum::<f64>() / m as f64;
    Ok(McRisk { mean, per_sample })
}
