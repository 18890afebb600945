//! Scalar pieces of the Catoni bound: the inversion `Φ⁻¹_β` and the two
//! statistical penalties that make an empirical certificate valid.

use crate::error::{Error, Result};

/// `Φ⁻¹_β(x) = (1 − e^{−βx}) / (1 − e^{−β})`.
///
/// Not clipped; certificate assembly clips the final value to `[0, 1]`.
pub fn catoni_inv(beta: f64, x: f64) -> f64 {
    debug_assert!(beta > 0.0);
    (-beta * x).exp_m1() / (-beta).exp_m1()
}

/// Hoeffding-style gap `sqrt(ln(2/δ') / m)` between the Monte Carlo mean of
/// `m` sampled classifiers and the posterior expectation.
pub fn chernoff_gap(m: u64, delta_prime: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("chernoff_gap needs m >= 1".into()));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::InvalidArgument(format!("delta' = {delta_prime} outside (0, 1)")));
    }
    Ok(((2.0 / delta_prime).ln() / m as f64).sqrt())
}

/// `ln(π² b² ln(c/λ)² / (6δ))`, the confidence cost of tuning λ on the grid
/// `λ = c·exp(−j/b)` with `j` treated as continuous.
pub fn union_bound_nats(lambda: f64, b: f64, c: f64, delta: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(b > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidArgument("lambda, b and c must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1)")));
    }
    if lambda >= c {
        return Err(Error::GridScale { lambda, c });
    }
    let j = (c / lambda).ln();
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok((pi2 * b * b * j * j / (6.0 * delta)).ln())
}

/// The three additive terms of the inner bound argument, in their native units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyTerms {
    pub union_bound_nats: f64,
    pub chernoff_gap: f64,
    pub kl_nats: f64,
}

impl PenaltyTerms {
    pub fn new(union_bound_nats: f64, chernoff_gap: f64, kl_nats: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(union_bound_nats) || !ok(kl_nats) || !ok(chernoff_gap) || chernoff_gap > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "penalties must be finite and nonnegative (union {union_bound_nats}, \
                 chernoff {chernoff_gap}, kl {kl_nats})"
            )));
        }
        Ok(Self { union_bound_nats, chernoff_gap, kl_nats })
    }
}
