//! Mean-field variational fit of the posterior variances with the mean held
//! at the trained weights. The objective is
//! `E_θ[L̂(θ)] + KL(N(θ*, diag s) ‖ N(θ₀, λI)) / (βn)`,
//! estimated by reparameterized samples `θ = θ* + √s ⊙ ε`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, rng_from, stream};
use crate::kernel::DiagGaussian;
use crate::nnet::{grad, select_rows, LossKind, NetSpec, ParamVector};

/// A loss that is an average over `len()` examples.
pub trait SampleLoss: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Mean loss over `batch` at `theta`, and its gradient.
    fn batch_grad(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;
}

/// Differentiable training loss of a network.
pub struct NetLoss<'a> {
    pub spec: &'a NetSpec,
    pub data: &'a Dataset,
    pub kind: LossKind,
}

impl SampleLoss for NetLoss<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn batch_grad(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let params = ParamVector::new(self.spec.layout(), theta.to_vec())?;
        let x = select_rows(self.data.x(), batch);
        let y: Vec<usize> = batch.iter().map(|&i| self.data.y()[i]).collect();
        let g = grad(self.spec, &params, x.view(), &y, self.kind)?;
        Ok((g.loss, g.grad.into_values()))
    }
}

/// `½ Σ_i h_i (θ_i − c_i)²` for every one of `n` examples.
#[derive(Clone, Debug)]
pub struct QuadraticLoss {
    pub center: Vec<f64>,
    pub h: Vec<f64>,
    pub n: usize,
}

impl SampleLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn len(&self) -> usize {
        self.n
    }

    fn batch_grad(&self, theta: &[f64], _batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let g = theta
            .iter()
            .zip(&self.center)
            .zip(&self.h)
            .map(|((t, c), h)| {
                value += 0.5 * h * (t - c) * (t - c);
                h * (t - c)
            })
            .collect();
        Ok((value, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Decays linearly to zero over the whole run.
    LinearDecay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Noise draws averaged per step; one draw is shared by the whole batch.
    pub mc_draws: usize,
    pub schedule: LrSchedule,
    /// Starting log-variance; `None` starts at the prior variance.
    pub init_log_var: Option<f64>,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self { epochs: 5, batch_size: 32, lr: 0.1, mc_draws: 1, schedule: LrSchedule::LinearDecay, init_log_var: None }
    }
}

#[derive(Clone, Debug)]
pub struct ViResult {
    pub posterior: DiagGaussian,
    /// Objective estimate averaged over the last epoch.
    pub surrogate: f64,
    /// Objective estimate per epoch.
    pub history: Vec<f64>,
}

/// Fits the log-variances with Adam. `prior_mean` and `lambda` define the
/// prior `N(prior_mean, λI)`; `beta` scales the KL as `KL/(βn)`.
pub fn vi_optimize_diag<L: SampleLoss>(
    loss: &L,
    mean: &[f64],
    prior_mean: &[f64],
    beta: f64,
    lambda: f64,
    config: &ViConfig,
    seed: u64,
) -> Result<ViResult> {
    let d = loss.dim();
    let n = loss.len();
    for len in [mean.len(), prior_mean.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    if !(beta > 0.0 && lambda > 0.0 && beta.is_finite() && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta and lambda must be positive, got {beta} and {lambda}")));
    }
    if n == 0 || config.batch_size == 0 || config.mc_draws == 0 {
        return Err(Error::InvalidArgument("VI needs data, a positive batch size and at least one draw".into()));
    }
    if !(config.lr >= 0.0 && config.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be nonnegative, got {}", config.lr)));
    }

    let kl_scale = 1.0 / (beta * n as f64);
    let gap_sq: f64 = mean.iter().zip(prior_mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let kl = |rho: &[f64]| {
        let ln_l = lambda.ln();
        0.5 * (rho.iter().map(|&r| r.exp() / lambda - 1.0 + ln_l - r).sum::<f64>() + gap_sq / lambda)
    };

    let mut rho = vec![config.init_log_var.unwrap_or(lambda.ln()); d];
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m1 = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = (steps_per_epoch * config.epochs).max(1);
    let mut rng = rng_from(derive_seed(seed, stream::VI));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut t = 0usize;

    let mut theta = vec![0.0; d];
    let mut eps_draw = vec![0.0; d];
    let mut g_rho = vec![0.0; d];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            g_rho.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for _ in 0..config.mc_draws {
                for j in 0..d {
                    eps_draw[j] = rng.sample(StandardNormal);
                    theta[j] = mean[j] + (0.5 * rho[j]).exp() * eps_draw[j];
                }
                let (value, g) = loss.batch_grad(&theta, batch)?;
                batch_loss += value;
                for j in 0..d {
                    g_rho[j] += g[j] * eps_draw[j] * 0.5 * (0.5 * rho[j]).exp();
                }
            }
            let draws = config.mc_draws as f64;
            batch_loss /= draws;
            let objective = batch_loss + kl_scale * kl(&rho);
            if !objective.is_finite() {
                return Err(Error::Diverged { epoch, step, loss: objective });
            }
            epoch_loss += batch_loss * batch.len() as f64;

            t += 1;
            let lr = match config.schedule {
                LrSchedule::Constant => config.lr,
                LrSchedule::LinearDecay => config.lr * (1.0 - (t - 1) as f64 / total as f64),
            };
            let (c1, c2) = (1.0 - b1.powi(t as i32), 1.0 - b2.powi(t as i32));
            for j in 0..d {
                let g = g_rho[j] / draws + kl_scale * 0.5 * (rho[j].exp() / lambda - 1.0);
                m1[j] = b1 * m1[j] + (1.0 - b1) * g;
                m2[j] = b2 * m2[j] + (1.0 - b2) * g * g;
                rho[j] -= lr * (m1[j] / c1) / ((m2[j] / c2).sqrt() + eps);
            }
        }
        history.push(epoch_loss / n as f64 + kl_scale * kl(&rho));
    }
    let surrogate = history.last().copied().unwrap_or_else(|| kl_scale * kl(&rho));
    let posterior = DiagGaussian::from_log_variance(mean.to_vec(), rho)?;
    Ok(ViResult { posterior, surrogate, history })
}
