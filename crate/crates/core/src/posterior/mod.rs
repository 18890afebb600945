//! Posterior families around trained weights.
//!
//! Every family keeps the posterior mean at `θ*`. Only the covariance and the
//! prior differ:
//!
//! | family       | posterior covariance             | prior              |
//! |--------------|----------------------------------|--------------------|
//! | `iso-zero`   | `λI`                             | `N(0, λI)`         |
//! | `iso-init`   | `λI`                             | `N(θ₀, λI)`        |
//! | `closed-diag`| `β(h + β/λ)⁻¹` per coordinate    | `N(θ₀, λI)`        |
//! | `closed-joint`| jointly optimal                 | data dependent     |
//! | `vi-diag`    | fitted by stochastic gradient    | `N(θ₀, λI)`        |
//! | `skfac-block`| `β(H_l + (β/λ)I)⁻¹` per neuron   | `N(θ₀, λI)`        |
//!
//! `closed-joint` uses a prior chosen with the training data, so its numbers
//! are a sanity check and never a certificate.

mod closed;
mod objective;
mod skfac;
mod vi;

use serde::{Deserialize, Serialize};

pub use closed::{closed_form_diag, closed_form_matrix, joint_optimal_diag, JointOptimum, GAP_FLOOR, H_FLOOR};
pub use objective::{block_objective, coordinate_objective, diag_objective, matrix_objective};
pub use skfac::{skfac_posterior, SkfacCurvature};
pub use vi::{vi_optimize_diag, LrSchedule, NetLoss, QuadraticLoss, SampleLoss, ViConfig, ViResult};

use crate::error::{Error, Result};
use crate::kernel::{kl_block, kl_diag, DiagGaussian, GaussianPosterior};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    IsoZero,
    IsoInit,
    ClosedDiag,
    ClosedJoint,
    ViDiag,
    SkfacBlock,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::IsoZero, Family::IsoInit, Family::ClosedDiag, Family::ClosedJoint, Family::ViDiag, Family::SkfacBlock];

    pub fn name(self) -> &'static str {
        match self {
            Family::IsoZero => "iso-zero",
            Family::IsoInit => "iso-init",
            Family::ClosedDiag => "closed-diag",
            Family::ClosedJoint => "closed-joint",
            Family::ViDiag => "vi-diag",
            Family::SkfacBlock => "skfac-block",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::InvalidArgument(format!("unknown posterior family `{s}`")))
    }

    pub fn validity(self) -> Validity {
        match self {
            Family::ClosedJoint => Validity::InvalidPrior,
            _ => Validity::Valid,
        }
    }

    /// Families whose covariance is built from a curvature estimate with its
    /// own `β`, separate from the bound's `β`.
    pub fn uses_posterior_beta(self) -> bool {
        matches!(self, Family::ClosedDiag | Family::ClosedJoint | Family::SkfacBlock)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Valid,
    InvalidPrior,
}

impl Validity {
    pub fn name(self) -> &'static str {
        match self {
            Validity::Valid => "valid",
            Validity::InvalidPrior => "invalid-prior",
        }
    }
}

/// A posterior together with the KL divergence to its prior.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub family: Family,
    /// `β` used to shape the covariance, if the family has one.
    pub posterior_beta: Option<f64>,
    pub lambda: f64,
    pub validity: Validity,
    pub dist: GaussianPosterior,
    pub kl_nats: f64,
    /// Coordinates raised to a floor by the joint solver.
    pub floored: usize,
}

/// `(N(center, λI), N(prior_center, λI))`.
pub fn isotropic_posterior(center: &[f64], prior_center: &[f64], lambda: f64) -> Result<(DiagGaussian, DiagGaussian)> {
    if center.len() != prior_center.len() {
        return Err(Error::DimensionMismatch { expected: center.len(), got: prior_center.len() });
    }
    let q = DiagGaussian::isotropic(center.to_vec(), lambda)?;
    let p = DiagGaussian::isotropic(prior_center.to_vec(), lambda)?;
    Ok((q, p))
}

impl Posterior {
    /// `iso-zero` when `init` is `None`, `iso-init` otherwise.
    pub fn isotropic(theta_star: &[f64], init: Option<&[f64]>, lambda: f64) -> Result<Self> {
        let zeros;
        let (family, prior_center) = match init {
            Some(t0) => (Family::IsoInit, t0),
            None => {
                zeros = vec![0.0; theta_star.len()];
                (Family::IsoZero, zeros.as_slice())
            }
        };
        let (q, p) = isotropic_posterior(theta_star, prior_center, lambda)?;
        let kl_nats = kl_diag(&q, &p)?;
        Ok(Self::new(family, None, lambda, GaussianPosterior::Diag(q), kl_nats, 0))
    }

    /// Closed-form diagonal posterior against `N(θ₀, λI)`.
    pub fn closed_diag(theta_star: &[f64], theta0: &[f64], h: &[f64], beta: f64, lambda: f64) -> Result<Self> {
        check_dims(theta_star, theta0, h)?;
        let var = closed_form_diag(h, beta, lambda, &vec![1.0; h.len()])?;
        let q = DiagGaussian::new(theta_star.to_vec(), &var)?;
        let p = DiagGaussian::isotropic(theta0.to_vec(), lambda)?;
        let kl_nats = kl_diag(&q, &p)?;
        Ok(Self::new(Family::ClosedDiag, Some(beta), lambda, GaussianPosterior::Diag(q), kl_nats, 0))
    }

    /// Jointly optimal posterior and prior. The prior is `N(θ₀, λσ_π)`.
    pub fn closed_joint(theta_star: &[f64], theta0: &[f64], h: &[f64], beta: f64, lambda: f64) -> Result<Self> {
        check_dims(theta_star, theta0, h)?;
        let opt = joint_optimal_diag(h, beta, lambda, theta_star, theta0)?;
        let q = DiagGaussian::new(theta_star.to_vec(), &opt.posterior_var)?;
        let prior_var: Vec<f64> = opt.prior_var.iter().map(|p| lambda * p).collect();
        let p = DiagGaussian::new(theta0.to_vec(), &prior_var)?;
        let kl_nats = kl_diag(&q, &p)?;
        Ok(Self::new(Family::ClosedJoint, Some(beta), lambda, GaussianPosterior::Diag(q), kl_nats, opt.floored))
    }

    /// Wraps a fitted diagonal posterior against `N(θ₀, λI)`.
    pub fn vi_diag(q: DiagGaussian, theta0: &[f64], beta: f64, lambda: f64) -> Result<Self> {
        let p = DiagGaussian::isotropic(theta0.to_vec(), lambda)?;
        let kl_nats = kl_diag(&q, &p)?;
        Ok(Self::new(Family::ViDiag, Some(beta), lambda, GaussianPosterior::Diag(q), kl_nats, 0))
    }

    /// Block posterior against `N(θ₀, λI)`.
    pub fn skfac(curv: &SkfacCurvature, theta_star: &[f64], theta0: &[f64], beta: f64, lambda: f64) -> Result<Self> {
        let q = curv.posterior(theta_star, beta, lambda)?;
        let kl_nats = kl_block(&q, theta0, lambda)?;
        Ok(Self::new(Family::SkfacBlock, Some(beta), lambda, GaussianPosterior::Block(q), kl_nats, 0))
    }

    fn new(family: Family, posterior_beta: Option<f64>, lambda: f64, dist: GaussianPosterior, kl_nats: f64, floored: usize) -> Self {
        Self { family, posterior_beta, lambda, validity: family.validity(), dist, kl_nats, floored }
    }
}

fn check_dims(theta_star: &[f64], theta0: &[f64], h: &[f64]) -> Result<()> {
    for len in [theta0.len(), h.len()] {
        if len != theta_star.len() {
            return Err(Error::DimensionMismatch { expected: theta_star.len(), got: len });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
