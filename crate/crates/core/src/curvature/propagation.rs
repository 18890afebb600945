//! Layerwise error propagation under weight perturbations.
//!
//! For perturbed weights `Ŵ` and a batch of `n` inputs:
//! - `Ê_i² = (1/n)‖S_i − Ŝ_i‖²` with `Ŝ_i = Ŵ_i a_{i−1}` on the true inputs,
//! - `ê_i² = (1/n)‖A_i − rect(Ŝ_i)‖²`, the same error after the rectifier,
//! - `ẽ_i = (1/√n)‖A_i − Ã_i‖` where `Ã` runs the perturbed network end to end.
//!
//! The output layer has no rectifier, so there `ê = Ê`. Two facts hold
//! exactly: `ê_i² ≤ Ê_i²`, and
//! `ẽ_i ≤ Σ_{t<i} (Π_{k=t+1..i} ‖Ŵ_k‖_F) ê_t + ê_i`.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, rng_from, stream};
use crate::nnet::{forward, NetSpec, ParamVector};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerErrors {
    pub layer: usize,
    /// `Ê_i²`
    pub preactivation_sq: f64,
    /// `ê_i²`
    pub activation_sq: f64,
    /// `ẽ_i`
    pub accumulated: f64,
    /// Right-hand side of the accumulation inequality.
    pub accumulated_bound: f64,
    /// `‖Ŵ_i‖_F`
    pub perturbed_norm: f64,
}

impl LayerErrors {
    pub fn activation_holds(&self) -> bool {
        within(self.activation_sq, self.preactivation_sq)
    }

    pub fn accumulation_holds(&self) -> bool {
        within(self.accumulated, self.accumulated_bound)
    }
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-12 * rhs.abs() + f64::MIN_POSITIVE
}

fn mean_sq_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    Zip::from(a).and(b).for_each(|x, y| s += (x - y) * (x - y));
    s / a.nrows() as f64
}

fn check_pair(spec: &NetSpec, theta: &ParamVector, perturbed: &ParamVector) -> Result<()> {
    if theta.layout() != &spec.layout() || perturbed.layout() != theta.layout() {
        return Err(Error::DimensionMismatch { expected: spec.num_params(), got: perturbed.len() });
    }
    Ok(())
}

/// `Ê_i²` for one layer: perturbed weights applied to the true inputs.
pub fn preactivation_error(spec: &NetSpec, theta: &ParamVector, perturbed: &ParamVector, x: ArrayView2<f64>, layer: usize) -> Result<f64> {
    check_pair(spec, theta, perturbed)?;
    let fwd = forward(spec, theta, x)?;
    let s_hat = fwd.layer_input(layer).dot(&perturbed.layer(layer).t());
    Ok(mean_sq_diff(fwd.pre_activation(layer), &s_hat))
}

/// All three error measures for every layer.
pub fn layer_errors(spec: &NetSpec, theta: &ParamVector, perturbed: &ParamVector, x: ArrayView2<f64>) -> Result<Vec<LayerErrors>> {
    check_pair(spec, theta, perturbed)?;
    let fwd = forward(spec, theta, x)?;
    let layers = spec.num_layers();
    let mut out = Vec::with_capacity(layers);
    let mut chained: Option<Array2<f64>> = None;
    let mut bound = 0.0;
    for i in 0..layers {
        let last = i + 1 == layers;
        let w_hat = perturbed.layer(i);
        let rect = |mut s: Array2<f64>| {
            if !last {
                s.mapv_inplace(|v| v.max(0.0));
            }
            s
        };
        let s_hat = fwd.layer_input(i).dot(&w_hat.t());
        let preactivation_sq = mean_sq_diff(fwd.pre_activation(i), &s_hat);
        let truth = if last { fwd.logits().clone() } else { fwd.hidden(i).clone() };
        let a_hat = rect(s_hat);
        let activation_sq = mean_sq_diff(&truth, &a_hat);
        let a_tilde = match &chained {
            None => a_hat,
            Some(prev) => rect(prev.dot(&w_hat.t())),
        };
        let accumulated = (mean_sq_diff(&truth, &a_tilde)).sqrt();
        let perturbed_norm = w_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        bound = perturbed_norm * bound + activation_sq.sqrt();
        out.push(LayerErrors { layer: i, preactivation_sq, activation_sq, accumulated, accumulated_bound: bound, perturbed_norm });
        chained = Some(a_tilde);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PropagationReport {
    pub trials: Vec<Vec<LayerErrors>>,
    pub activation_violations: usize,
    pub accumulation_violations: usize,
}

impl PropagationReport {
    pub fn all_hold(&self) -> bool {
        self.activation_violations == 0 && self.accumulation_violations == 0
    }
}

fn perturb(theta: &ParamVector, layers: &[usize], scale: f64, seed: u64) -> ParamVector {
    let mut rng = rng_from(seed);
    let mut perturbed = theta.clone();
    for &l in layers {
        let mut layer = perturbed.layer_mut(l);
        let dir: Vec<f64> = (0..layer.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = scale * rng.random::<f64>();
        for (w, d) in layer.iter_mut().zip(&dir) {
            *w += radius * d / norm;
        }
    }
    perturbed
}

/// Random perturbations with `‖W_i − Ŵ_i‖_F = C·u`, `u ~ U(0, 1)` drawn per
/// perturbed layer. `layers` selects which layers move (all when `None`).
pub fn error_propagation_check(
    spec: &NetSpec,
    theta: &ParamVector,
    x: ArrayView2<f64>,
    scale: f64,
    trials: usize,
    layers: Option<&[usize]>,
    seed: u64,
) -> Result<PropagationReport> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("perturbation scale must be finite and nonnegative, got {scale}")));
    }
    let all: Vec<usize> = (0..spec.num_layers()).collect();
    let chosen = layers.unwrap_or(&all);
    if let Some(&bad) = chosen.iter().find(|&&l| l >= spec.num_layers()) {
        return Err(Error::InvalidArgument(format!("layer {bad} out of range")));
    }
    let mut report = PropagationReport { trials: Vec::with_capacity(trials), activation_violations: 0, accumulation_violations: 0 };
    for t in 0..trials {
        let perturbed = perturb(theta, chosen, scale, derive_seed(seed, stream::PERTURB + t as u64));
        let errs = layer_errors(spec, theta, &perturbed, x)?;
        report.activation_violations += errs.iter().filter(|e| !e.activation_holds()).count();
        report.accumulation_violations += errs.iter().filter(|e| !e.accumulation_holds()).count();
        report.trials.push(errs);
    }
    Ok(report)
}
