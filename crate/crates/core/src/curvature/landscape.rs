use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::s;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, rng_from, stream};
use crate::nnet::{dataset_loss, LossKind, NetSpec, ParamVector};

pub const LANDSCAPE_SCHEMA_VERSION: u32 = 1;

/// Least-squares `y ≈ a t² + b t + c` with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r2: f64,
}

impl QuadFit {
    pub fn eval(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }
}

pub fn fit_quadratic(t: &[f64], y: &[f64]) -> Result<QuadFit> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: t.len(), got: y.len() });
    }
    if t.len() < 3 {
        return Err(Error::InvalidArgument("a quadratic fit needs at least three points".into()));
    }
    let design = DMatrix::from_fn(t.len(), 3, |r, c| t[r].powi(2 - c as i32));
    let rhs = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &rhs))
        .ok_or_else(|| Error::InvalidArgument("quadratic fit needs three distinct t values".into()))?;
    let fit = QuadFit { a: coef[0], b: coef[1], c: coef[2], r2: 0.0 };
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = t.iter().zip(y).map(|(&ti, &yi)| (yi - fit.eval(ti)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(QuadFit { r2, ..fit })
}

/// `count` independent directions, uniform on the unit sphere in `R^d`.
pub fn random_directions(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = rng_from(derive_seed(seed, stream::DIRECTIONS + i as u64));
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// `√(λd)`, where a `d`-dimensional `N(0, λI)` sample concentrates.
pub fn bubble_radius(lambda: f64, d: usize) -> f64 {
    (lambda * d as f64).sqrt()
}

/// Evaluates `f(center + t·v)` for every direction and every `t`.
pub fn probe_function<F>(f: F, center: &[f64], directions: &[Vec<f64>], t_grid: &[f64]) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    directions
        .iter()
        .map(|v| {
            t_grid
                .par_iter()
                .map(|&t| {
                    let point: Vec<f64> = center.iter().zip(v).map(|(c, d)| c + t * d).collect();
                    f(&point)
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    pub directions: usize,
    pub t_grid: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub loss: LossKind,
    /// Evaluate on at most this many leading training rows.
    pub max_samples: Option<usize>,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            directions: 4,
            t_grid: (0..81).map(|i| -200.0 + 5.0 * i as f64).collect(),
            lambdas: vec![0.04],
            loss: LossKind::Categorical,
            max_samples: None,
            seed: 0,
        }
    }
}

/// Loss curves along random unit directions through a point.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeProbe {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    /// `losses[direction][t index]`
    pub losses: Vec<Vec<f64>>,
    /// Fit over the whole grid, per direction.
    pub fits: Vec<QuadFit>,
    /// `(λ, √(λd))` markers.
    pub radii: Vec<(f64, f64)>,
}

impl LandscapeProbe {
    pub fn from_curves(dim: usize, directions: Vec<Vec<f64>>, t: Vec<f64>, losses: Vec<Vec<f64>>, lambdas: &[f64]) -> Result<Self> {
        if losses.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landscape loss"));
        }
        let fits = losses.iter().map(|l| fit_quadratic(&t, l)).collect::<Result<_>>()?;
        let radii = lambdas.iter().map(|&l| (l, bubble_radius(l, dim))).collect();
        Ok(Self { dim, directions, t, losses, fits, radii })
    }

    /// Refits each direction using only `|t| ≤ radius`.
    pub fn fit_within(&self, radius: f64) -> Result<Vec<QuadFit>> {
        let keep: Vec<usize> = (0..self.t.len()).filter(|&i| self.t[i].abs() <= radius).collect();
        let t: Vec<f64> = keep.iter().map(|&i| self.t[i]).collect();
        self.losses
            .iter()
            .map(|l| {
                let y: Vec<f64> = keep.iter().map(|&i| l[i]).collect();
                fit_quadratic(&t, &y)
            })
            .collect()
    }

    /// Columns: `schema_version,direction,t,loss,fit`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "schema_version,direction,t,loss,fit")?;
        for (d, (losses, fit)) in self.losses.iter().zip(&self.fits).enumerate() {
            for (&t, &l) in self.t.iter().zip(losses) {
                writeln!(w, "{LANDSCAPE_SCHEMA_VERSION},{d},{t},{l},{}", fit.eval(t))?;
            }
        }
        Ok(())
    }
}

/// Training loss along random directions through `theta`.
pub fn landscape_probe(spec: &NetSpec, theta: &ParamVector, data: &Dataset, opts: &ProbeOptions) -> Result<LandscapeProbe> {
    if opts.t_grid.len() < 3 {
        return Err(Error::InvalidArgument("the t grid needs at least three points".into()));
    }
    let rows = opts.max_samples.unwrap_or(data.len()).min(data.len());
    let x = data.x().slice(s![..rows, ..]);
    let y = &data.y()[..rows];
    let dim = theta.len();
    let directions = random_directions(dim, opts.directions, opts.seed);
    let mut losses = Vec::with_capacity(directions.len());
    for v in &directions {
        let mut curve = Vec::with_capacity(opts.t_grid.len());
        for &t in &opts.t_grid {
            let point =
                if t == 0.0 { theta.clone() } else { theta.with_values(theta.values().iter().zip(v).map(|(c, d)| c + t * d).collect())? };
            curve.push(dataset_loss(spec, &point, x, y, opts.loss)?);
        }
        losses.push(curve);
    }
    LandscapeProbe::from_curves(dim, directions, opts.t_grid.clone(), losses, &opts.lambdas)
}
