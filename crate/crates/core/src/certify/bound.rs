use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{catoni_inv, chernoff_gap, union_bound_nats};
use crate::posterior::{Family, Validity};

/// Settings shared by every certificate of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Monte Carlo draws per posterior.
    pub m: usize,
    pub delta: f64,
    pub delta_prime: f64,
    /// Density of the λ grid `c·exp(−j/b)` covered by the union bound.
    pub b: f64,
    /// Largest admissible λ.
    pub c: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { m: 1000, delta: 0.025, delta_prime: 0.025, b: 100.0, c: 1.0 }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta_prime > 0.0 && self.delta + self.delta_prime < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta = {} and delta' = {} must be positive with sum below 1",
                self.delta, self.delta_prime
            )));
        }
        if !(self.b > 0.0 && self.c > 0.0 && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::InvalidArgument("b and c must be positive and finite".into()));
        }
        Ok(())
    }

    /// `1 − δ − δ'`.
    pub fn confidence(&self) -> f64 {
        1.0 - self.delta - self.delta_prime
    }
}

/// One certificate with every input needed to recompute it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCertificate {
    pub family: Family,
    pub validity: Validity,
    /// `β` of the bound.
    pub beta: f64,
    /// `β` that shaped the posterior covariance, if any.
    pub posterior_beta: Option<f64>,
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub delta_prime: f64,
    pub b: f64,
    pub c: f64,
    pub emp_risk: f64,
    pub kl_nats: f64,
    pub union_bound_nats: f64,
    pub chernoff_gap: f64,
    pub bound_value: f64,
    pub beta_star: f64,
    pub complexity: f64,
    pub seed: u64,
}

/// `min(1, Φ⁻¹_β(L̃ + KL/(βn) + union/(βn) + gap))`.
pub fn bound_value(emp_risk: f64, kl_nats: f64, union_nats: f64, gap: f64, beta: f64, n: usize) -> f64 {
    let bn = beta * n as f64;
    let inner = emp_risk + kl_nats / bn + union_nats / bn + gap;
    catoni_inv(beta, inner).min(1.0)
}

/// `Φ⁻¹_{β*}(L̃ + KL/(β*n)) − L̃`. The inversion is capped at 1 like the
/// bound itself, so the result lies in `[0, 1 − L̃]`.
pub fn complexity_value(emp_risk: f64, kl_nats: f64, beta_star: f64, n: usize) -> f64 {
    (catoni_inv(beta_star, emp_risk + kl_nats / (beta_star * n as f64)).min(1.0) - emp_risk).max(0.0)
}

/// Builds a certificate for `family`. `beta_star` starts at `beta`; grid
/// searches replace it with the best `β` of the group.
pub fn assemble_bound(
    family: Family,
    emp_risk: f64,
    kl_nats: f64,
    beta: f64,
    lambda: f64,
    n: usize,
    params: &BoundParams,
) -> Result<BoundCertificate> {
    params.validate()?;
    if !(0.0..=1.0).contains(&emp_risk) {
        return Err(Error::InvalidArgument(format!("empirical risk {emp_risk} outside [0, 1]")));
    }
    if !(kl_nats >= 0.0) || !kl_nats.is_finite() {
        return Err(Error::InvalidArgument(format!("KL must be finite and nonnegative, got {kl_nats}")));
    }
    if !(beta > 0.0) || !beta.is_finite() || n == 0 {
        return Err(Error::InvalidArgument(format!("beta must be positive and n nonzero (beta {beta}, n {n})")));
    }
    let union = union_bound_nats(lambda, params.b, params.c, params.delta)?;
    let gap = chernoff_gap(params.m as u64, params.delta_prime)?;
    let mut cert = BoundCertificate {
        family,
        validity: family.validity(),
        beta,
        posterior_beta: None,
        lambda,
        n,
        m: params.m,
        delta: params.delta,
        delta_prime: params.delta_prime,
        b: params.b,
        c: params.c,
        emp_risk,
        kl_nats,
        union_bound_nats: union,
        chernoff_gap: gap,
        bound_value: bound_value(emp_risk, kl_nats, union, gap, beta, n),
        beta_star: beta,
        complexity: 0.0,
        seed: 0,
    };
    cert.complexity = complexity_metric(&cert, beta);
    Ok(cert)
}

/// Complexity of a certificate's posterior measured at `beta_star`.
pub fn complexity_metric(cert: &BoundCertificate, beta_star: f64) -> f64 {
    complexity_value(cert.emp_risk, cert.kl_nats, beta_star, cert.n)
}

impl BoundCertificate {
    /// Bound recomputed from the stored inputs.
    pub fn replay(&self) -> Result<f64> {
        let params = BoundParams { m: self.m, delta: self.delta, delta_prime: self.delta_prime, b: self.b, c: self.c };
        let again = assemble_bound(self.family, self.emp_risk, self.kl_nats, self.beta, self.lambda, self.n, &params)?;
        Ok(again.bound_value)
    }

    /// Only valid-prior certificates are bounds.
    pub fn certified(&self) -> bool {
        self.validity == Validity::Valid
    }

    pub fn non_vacuous(&self) -> bool {
        self.bound_value < 1.0
    }

    pub(crate) fn set_beta_star(&mut self, beta_star: f64) {
        self.beta_star = beta_star;
        self.complexity = complexity_metric(self, beta_star);
    }
}
