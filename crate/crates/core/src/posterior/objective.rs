//! The quadratic-model objective
//! `½ tr(HΣ) + β·KL(N(μ, Σ) ‖ N(μ_π, λΣ_π))`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// One coordinate of the diagonal objective: posterior variance `s`, prior
/// variance `λ·p`, squared mean gap `gap`.
pub fn coordinate_objective(h: f64, s: f64, beta: f64, lambda: f64, p: f64, gap: f64) -> f64 {
    let lp = lambda * p;
    0.5 * h * s + 0.5 * beta * (s / lp - 1.0 + gap / lp + (lp / s).ln())
}

/// Sum of [`coordinate_objective`] over all coordinates.
pub fn diag_objective(h: &[f64], post_var: &[f64], beta: f64, lambda: f64, prior_var: &[f64], gap: &[f64]) -> Result<f64> {
    let k = h.len();
    if post_var.len() != k || prior_var.len() != k || gap.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: post_var.len() });
    }
    Ok((0..k).map(|i| coordinate_objective(h[i], post_var[i], beta, lambda, prior_var[i], gap[i])).sum())
}

/// Matrix form with `Δ = μ − μ_π`.
pub fn matrix_objective(
    h: &DMatrix<f64>,
    post_cov: &DMatrix<f64>,
    beta: f64,
    lambda: f64,
    prior_cov: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> Result<f64> {
    let k = h.nrows();
    if post_cov.shape() != (k, k) || prior_cov.shape() != (k, k) || delta.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: post_cov.nrows() });
    }
    let prior = Cholesky::new(prior_cov.clone()).ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let post = Cholesky::new(post_cov.clone()).ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let log_det = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let prior_inv = prior.inverse();
    let trace_h = (h * post_cov).trace();
    let trace_p = (&prior_inv * post_cov).trace() / lambda;
    let maha = (delta.transpose() * &prior_inv * delta)[0] / lambda;
    let ln_ratio = k as f64 * lambda.ln() + log_det(&prior) - log_det(&post);
    Ok(0.5 * trace_h + 0.5 * beta * (trace_p - k as f64 + maha + ln_ratio))
}

/// Per-neuron objective of a layer whose neurons share `H` and the
/// isotropic prior `N(μ_π, λI)`, summed over `neurons` identical blocks.
/// `gap_sq` is `Σ_j ‖μ_j − μ_πj‖²` over the layer.
pub fn block_objective(h: &DMatrix<f64>, cov: &DMatrix<f64>, neurons: usize, beta: f64, lambda: f64, gap_sq: f64) -> Result<f64> {
    let k = h.nrows();
    let zero = DVector::zeros(k);
    let one = matrix_objective(h, cov, beta, lambda, &DMatrix::identity(k, k), &zero)?;
    Ok(neurons as f64 * one + 0.5 * beta * gap_sq / lambda)
}
