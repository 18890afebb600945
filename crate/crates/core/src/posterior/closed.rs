use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

/// Lower bound applied to curvature entries before the joint formulas.
pub const H_FLOOR: f64 = 1e-12;
/// Lower bound applied to squared mean gaps before the joint formulas.
pub const GAP_FLOOR: f64 = 1e-16;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Diagonal optimum of the quadratic objective for a fixed prior
/// `N(μ_π, λ·diag(prior_var))`: `σ_i = β / (h_i + β/(λ·prior_var_i))`.
pub fn closed_form_diag(h: &[f64], beta: f64, lambda: f64, prior_var: &[f64]) -> Result<Vec<f64>> {
    check_positive("beta", beta)?;
    check_positive("lambda", lambda)?;
    if h.len() != prior_var.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), got: prior_var.len() });
    }
    h.iter()
        .zip(prior_var)
        .enumerate()
        .map(|(i, (&hi, &p))| {
            if !(hi >= 0.0) || !hi.is_finite() {
                return Err(Error::DegenerateCoordinate { index: i, reason: "curvature must be finite and nonnegative" });
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NonPositiveVariance { index: i, value: p });
            }
            Ok(beta / (hi + beta / (lambda * p)))
        })
        .collect()
}

/// Full-matrix optimum `β (H + (β/λ) Σ_π⁻¹)⁻¹`.
pub fn closed_form_matrix(h: &DMatrix<f64>, beta: f64, lambda: f64, prior_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_positive("beta", beta)?;
    check_positive("lambda", lambda)?;
    if h.shape() != prior_cov.shape() || !h.is_square() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: prior_cov.nrows() });
    }
    let prior_inv = Cholesky::new(prior_cov.clone()).ok_or(Error::NotPositiveDefinite { block: 0 })?.inverse();
    let precision = h + prior_inv * (beta / lambda);
    let precision = (&precision + precision.transpose()) * 0.5;
    let cov = Cholesky::new(precision).ok_or(Error::NotPositiveDefinite { block: 0 })?.inverse() * beta;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Jointly optimal diagonal posterior and prior variances. The prior
/// covariance is `λ·prior_var`; this prior depends on the training data.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOptimum {
    pub posterior_var: Vec<f64>,
    pub prior_var: Vec<f64>,
    /// Coordinates where `h` or the squared mean gap was raised to its floor.
    pub floored: usize,
}

/// Per coordinate, with `u = ½[√(h² + 4βh/Δ²) − h]`:
/// `1/σ_ρ = (h + u)/β` and `1/σ_π = (λ/β)·u`.
pub fn joint_optimal_diag(h: &[f64], beta: f64, lambda: f64, mu_post: &[f64], mu_prior: &[f64]) -> Result<JointOptimum> {
    check_positive("beta", beta)?;
    check_positive("lambda", lambda)?;
    if h.len() != mu_post.len() || h.len() != mu_prior.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), got: mu_post.len().min(mu_prior.len()) });
    }
    let mut floored = 0;
    let mut posterior_var = Vec::with_capacity(h.len());
    let mut prior_var = Vec::with_capacity(h.len());
    for i in 0..h.len() {
        let (mut hi, mut gap) = (h[i], (mu_post[i] - mu_prior[i]).powi(2));
        if !(hi >= 0.0) || !hi.is_finite() || !gap.is_finite() {
            return Err(Error::DegenerateCoordinate { index: i, reason: "curvature and mean gap must be finite, curvature nonnegative" });
        }
        if hi < H_FLOOR || gap < GAP_FLOOR {
            floored += 1;
            hi = hi.max(H_FLOOR);
            gap = gap.max(GAP_FLOOR);
        }
        let c = 4.0 * beta * hi / gap;
        // ½[√(h² + c) − h] without cancellation.
        let u = 0.5 * c / ((hi * hi + c).sqrt() + hi);
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::DegenerateCoordinate { index: i, reason: "no finite joint optimum" });
        }
        posterior_var.push(beta / (hi + u));
        prior_var.push(beta / (lambda * u));
    }
    Ok(JointOptimum { posterior_var, prior_var, floored })
}
