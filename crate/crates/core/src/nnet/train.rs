use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{dataset_loss, grad, select_rows, LossKind, NetSpec, ParamVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, rng_from, stream};

/// First-order optimizers. Both use the time-based decay
/// `lr_t = lr / (1 + decay·t)` with `t` counting minibatch steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64, decay: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, decay: f64 },
}

impl Optimizer {
    /// SGD with learning rate 0.01, momentum 0.9 and decay 1e-3.
    pub fn mnist_default() -> Self {
        Optimizer::Sgd { lr: 0.01, momentum: 0.9, decay: 1e-3 }
    }

    /// Adam with learning rate 1e-3 and decay 5e-5.
    pub fn cifar_default() -> Self {
        Optimizer::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-7, decay: 5e-5 }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Optimizer::Sgd { lr, momentum, decay } => lr >= 0.0 && (0.0..1.0).contains(&momentum) && decay >= 0.0,
            Optimizer::Adam { lr, beta1, beta2, eps, decay } => {
                lr >= 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 && decay >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial weights are `N(0, gain²/fan_in)`.
    pub init_gain: f64,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.loss == LossKind::ZeroOne {
            return Err(Error::NotDifferentiable("zero-one"));
        }
        if !(self.init_gain >= 0.0) || !self.init_gain.is_finite() {
            return Err(Error::InvalidArgument(format!("init gain must be finite and nonnegative, got {}", self.init_gain)));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { optimizer: Optimizer::mnist_default(), epochs: 10, batch_size: 32, init_gain: 1.0, loss: LossKind::Categorical }
    }
}

/// Initial and final weights of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub spec: NetSpec,
    pub config: TrainConfig,
    pub seed: u64,
    pub theta0: ParamVector,
    pub theta_star: ParamVector,
    pub epoch_losses: Vec<f64>,
    pub train_error: f64,
    pub test_error: Option<f64>,
}

/// Draws `W_i ~ N(0, gain²/fan_in)` for every layer.
pub(crate) fn init_params(spec: &NetSpec, gain: f64, seed: u64) -> ParamVector {
    let mut rng = rng_from(derive_seed(seed, stream::INIT));
    let layout = spec.layout();
    let mut values = vec![0.0; layout.len()];
    for l in layout.layers() {
        let sd = gain / (l.fan_in as f64).sqrt();
        for v in &mut values[l.offset..l.offset + l.len()] {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ParamVector::new(layout, values).unwrap()
}

enum State {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64> },
}

fn step(opt: &Optimizer, state: &mut State, t: usize, theta: &mut [f64], g: &[f64]) {
    match (opt, state) {
        (&Optimizer::Sgd { lr, momentum, decay }, State::Sgd { velocity }) => {
            let lr = lr / (1.0 + decay * t as f64);
            for ((w, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(g) {
                *v = momentum * *v - lr * g;
                *w += *v;
            }
        }
        (&Optimizer::Adam { lr, beta1, beta2, eps, decay }, State::Adam { m, v }) => {
            let lr = lr / (1.0 + decay * t as f64);
            let k = (t + 1) as i32;
            let c1 = 1.0 - beta1.powi(k);
            let c2 = 1.0 - beta2.powi(k);
            for (((w, m), v), g) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        _ => unreachable!("optimizer state mismatch"),
    }
}

/// Minibatch training from a seeded initialization. Each epoch reshuffles with
/// its own derived stream, so runs are reproducible from `seed`.
pub fn train(spec: &NetSpec, train_set: &Dataset, test_set: Option<&Dataset>, config: &TrainConfig, seed: u64) -> Result<TrainRecord> {
    config.validate()?;
    if train_set.dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch { expected: spec.input_dim(), got: train_set.dim() });
    }
    if train_set.classes() > spec.output_dim() {
        return Err(Error::LabelOutOfRange { label: train_set.classes() - 1, classes: spec.output_dim() });
    }

    let theta0 = init_params(spec, config.init_gain, seed);
    let mut theta = theta0.clone();
    let p = theta.len();
    let mut state = match config.optimizer {
        Optimizer::Sgd { .. } => State::Sgd { velocity: vec![0.0; p] },
        Optimizer::Adam { .. } => State::Adam { m: vec![0.0; p], v: vec![0.0; p] },
    };
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut t = 0;
    for epoch in 0..config.epochs {
        let mut rng = rng_from(derive_seed(seed, stream::SHUFFLE + epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let xb: Array2<f64> = select_rows(train_set.x(), idx);
            let yb: Vec<usize> = idx.iter().map(|&i| train_set.y()[i]).collect();
            let g = grad(spec, &theta, xb.view(), &yb, config.loss)?;
            if !g.loss.is_finite() || g.grad.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, step: b, loss: g.loss });
            }
            total += g.loss * idx.len() as f64;
            step(&config.optimizer, &mut state, t, theta.values_mut(), g.grad.values());
            t += 1;
        }
        epoch_losses.push(total / n as f64);
    }

    let train_error = predict_error(spec, &theta, train_set)?;
    let test_error = test_set.map(|d| predict_error(spec, &theta, d)).transpose()?;
    Ok(TrainRecord { spec: spec.clone(), config: config.clone(), seed, theta0, theta_star: theta, epoch_losses, train_error, test_error })
}

/// Zero-one error of `theta` on a dataset.
pub fn predict_error(spec: &NetSpec, theta: &ParamVector, data: &Dataset) -> Result<f64> {
    dataset_loss(spec, theta, data.x().view(), data.y(), LossKind::ZeroOne)
}
