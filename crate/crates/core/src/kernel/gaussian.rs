//! Gaussian families over flat parameter vectors, their KL divergences and
//! reparameterized samplers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::rng::rng_from;
use crate::error::{Error, Result};

/// Gaussian with diagonal covariance.
///
/// Variances are held as log-variances so that optimizers can move them
/// freely; [`DiagGaussian::variance`] exposes plain variances.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, variance: &[f64]) -> Result<Self> {
        check_len(mean.len(), variance.len())?;
        let log_var = variance
            .iter()
            .enumerate()
            .map(|(index, &v)| if v > 0.0 && v.is_finite() { Ok(v.ln()) } else { Err(Error::NonPositiveVariance { index, value: v }) })
            .collect::<Result<Vec<_>>>()?;
        Self::from_log_variance(mean, log_var)
    }

    pub fn from_log_variance(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        check_len(mean.len(), log_var.len())?;
        if let Some(index) = log_var.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonPositiveVariance { index, value: log_var[index].exp() });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        Ok(Self { mean, log_var })
    }

    /// `N(mean, variance * I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::NonPositiveVariance { index: 0, value: variance });
        }
        let log_var = vec![variance.ln(); mean.len()];
        Self::from_log_variance(mean, log_var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_variance(&self) -> &[f64] {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|l| l.exp()).collect()
    }

    /// `θ = μ + sqrt(σ) ⊙ z` with `z ~ N(0, I)` drawn from `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        self.mean
            .iter()
            .zip(&self.log_var)
            .map(|(&m, &lv)| {
                let z: f64 = rng.sample(StandardNormal);
                m + (0.5 * lv).exp() * z
            })
            .collect()
    }
}

/// `KL(q || p)` in nats for diagonal Gaussians.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    check_len(p.dim(), q.dim())?;
    let mut kl = 0.0;
    for i in 0..q.dim() {
        // x = ln(vq / vp); vq/vp - 1 - ln(vq/vp) = expm1(x) - x, exact zero at x = 0.
        let x = q.log_var[i] - p.log_var[i];
        let d = q.mean[i] - p.mean[i];
        kl += x.exp_m1() - x + d * d * (-p.log_var[i]).exp();
    }
    Ok(0.5 * kl)
}

/// Covariance block shared by every neuron of one layer.
#[derive(Clone, Debug)]
pub struct CovBlock {
    layer: usize,
    neurons: usize,
    offset: usize,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl CovBlock {
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn fan_in(&self) -> usize {
        self.cov.nrows()
    }

    /// First index of this block in the flat mean vector.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.neurons * self.fan_in()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// Gaussian whose covariance is block diagonal with one `fan_in × fan_in`
/// block per neuron, and all neurons of a layer sharing the same block.
///
/// Blocks are laid out contiguously in the order given; inside a block the
/// parameters of neuron `j` occupy `offset + j * fan_in .. offset + (j + 1) * fan_in`.
#[derive(Clone, Debug)]
pub struct BlockGaussian {
    mean: Vec<f64>,
    blocks: Vec<CovBlock>,
}

impl BlockGaussian {
    /// `blocks` holds `(layer id, neuron count, covariance)` triples.
    pub fn new(mean: Vec<f64>, blocks: Vec<(usize, usize, DMatrix<f64>)>) -> Result<Self> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(blocks.len());
        for (b, (layer, neurons, cov)) in blocks.into_iter().enumerate() {
            if cov.nrows() != cov.ncols() {
                return Err(Error::InvalidArgument(format!("block {b} covariance is not square")));
            }
            let asym = (&cov - cov.transpose()).abs().max();
            if !(asym <= 1e-10 * cov.abs().max().max(1.0)) {
                return Err(Error::NotPositiveDefinite { block: b });
            }
            let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite { block: b })?;
            let l = chol.l();
            let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let block = CovBlock { layer, neurons, offset, cov, chol: l, log_det };
            offset += block.len();
            out.push(block);
        }
        check_len(mean.len(), offset)?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        Ok(Self { mean, blocks: out })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn blocks(&self) -> &[CovBlock] {
        &self.blocks
    }

    /// `θ = μ + L z` per neuron, with one triangular factor per layer.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        let mut theta = self.mean.clone();
        for block in &self.blocks {
            let k = block.fan_in();
            // Column j of z is the noise of neuron j.
            let mut z = DMatrix::<f64>::zeros(k, block.neurons);
            for j in 0..block.neurons {
                for r in 0..k {
                    z[(r, j)] = rng.sample(StandardNormal);
                }
            }
            let noise = &block.chol * z;
            for j in 0..block.neurons {
                let base = block.offset + j * k;
                for r in 0..k {
                    theta[base + r] += noise[(r, j)];
                }
            }
        }
        theta
    }
}

/// `KL(q || N(p_mean, λ I))` summed over every neuron block.
pub fn kl_block(q: &BlockGaussian, p_mean: &[f64], p_lambda: f64) -> Result<f64> {
    check_len(q.dim(), p_mean.len())?;
    if !(p_lambda > 0.0 && p_lambda.is_finite()) {
        return Err(Error::NonPositiveVariance { index: 0, value: p_lambda });
    }
    let ln_lambda = p_lambda.ln();
    let mut kl = 0.0;
    for block in &q.blocks {
        let k = block.fan_in() as f64;
        let per_neuron = block.cov.trace() / p_lambda - k + k * ln_lambda - block.log_det;
        kl += block.neurons as f64 * per_neuron;
        let range = block.offset..block.offset + block.len();
        let dist2: f64 = q.mean[range.clone()].iter().zip(&p_mean[range]).map(|(a, b)| (a - b) * (a - b)).sum();
        kl += dist2 / p_lambda;
    }
    Ok(0.5 * kl)
}

/// Either posterior parameterization used by the certifier.
#[derive(Clone, Debug)]
pub enum GaussianPosterior {
    Diag(DiagGaussian),
    Block(BlockGaussian),
}

impl GaussianPosterior {
    pub fn mean(&self) -> &[f64] {
        match self {
            GaussianPosterior::Diag(g) => g.mean(),
            GaussianPosterior::Block(g) => g.mean(),
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        match self {
            GaussianPosterior::Diag(g) => g.sample(seed),
            GaussianPosterior::Block(g) => g.sample(seed),
        }
    }
}

/// Draws one parameter vector from `dist`; deterministic given `seed`.
pub fn sample_gaussian(dist: &GaussianPosterior, seed: u64) -> Vec<f64> {
    dist.sample(seed)
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
