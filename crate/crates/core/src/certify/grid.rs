use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bound::{assemble_bound, BoundCertificate, BoundParams};
use super::mc::{mc_empirical_risk, McRisk};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::rng::{derive_path, stream};
use crate::nnet::{LossKind, NetSpec, ParamVector};
use crate::posterior::{vi_optimize_diag, Family, NetLoss, Posterior, SkfacCurvature, ViConfig};

/// `count` points spaced linearly on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// `count` points spaced geometrically on `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), count).into_iter().map(f64::exp).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Bound `β` for the isotropic and VI families, covariance `β` for the
    /// curvature families.
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Bound `β` candidates for the curvature families.
    pub catoni_betas: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.betas.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A cell that could not be certified.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub family: Family,
    pub beta: f64,
    pub lambda: f64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct GridResult {
    /// Ordered by `β` index, then `λ` index.
    pub certificates: Vec<BoundCertificate>,
    pub failures: Vec<CellFailure>,
}

/// Everything a sweep needs besides the grid.
pub struct Certifier<'a> {
    pub spec: &'a NetSpec,
    pub theta_star: &'a ParamVector,
    pub theta0: &'a ParamVector,
    pub train: &'a Dataset,
    pub params: BoundParams,
    /// Diagonal curvature for `closed-diag` and `closed-joint`.
    pub fisher: Option<&'a [f64]>,
    pub skfac: Option<&'a SkfacCurvature>,
    pub vi: ViConfig,
    pub seed: u64,
}

impl Certifier<'_> {
    /// Posterior of one cell. `beta` is the grid `β`.
    pub fn posterior(&self, family: Family, beta: f64, lambda: f64, cell_seed: u64) -> Result<Posterior> {
        let ts = self.theta_star.values();
        let t0 = self.theta0.values();
        let fisher = || self.fisher.ok_or_else(|| Error::InvalidArgument(format!("{family} needs a diagonal curvature")));
        match family {
            Family::IsoZero => Posterior::isotropic(ts, None, lambda),
            Family::IsoInit => Posterior::isotropic(ts, Some(t0), lambda),
            Family::ClosedDiag => Posterior::closed_diag(ts, t0, fisher()?, beta, lambda),
            Family::ClosedJoint => Posterior::closed_joint(ts, t0, fisher()?, beta, lambda),
            Family::SkfacBlock => {
                let curv = self.skfac.ok_or_else(|| Error::InvalidArgument(format!("{family} needs block curvatures")))?;
                Posterior::skfac(curv, ts, t0, beta, lambda)
            }
            Family::ViDiag => {
                let loss = NetLoss { spec: self.spec, data: self.train, kind: LossKind::Categorical };
                let fit = vi_optimize_diag(&loss, ts, t0, beta, lambda, &self.vi, cell_seed)?;
                Posterior::vi_diag(fit.posterior, t0, beta, lambda)
            }
        }
    }

    fn risk(&self, post: &Posterior, seed: u64) -> Result<McRisk> {
        mc_empirical_risk(&post.dist, self.spec, self.train.x().view(), self.train.y(), self.params.m, seed)
    }
}

/// Best bound over `betas` for a fixed posterior; ties go to the first.
fn best_over_betas(
    family: Family,
    risk: f64,
    kl: f64,
    lambda: f64,
    n: usize,
    betas: &[f64],
    params: &BoundParams,
) -> Result<BoundCertificate> {
    let mut best: Option<BoundCertificate> = None;
    for &b in betas {
        let cert = assemble_bound(family, risk, kl, b, lambda, n, params)?;
        if best.as_ref().is_none_or(|c| cert.bound_value < c.bound_value) {
            best = Some(cert);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty bound beta grid".into()))
}

/// One certificate per `(β, λ)` cell.
///
/// Isotropic posteriors do not depend on `β`, so one Monte Carlo estimate per
/// `λ` serves every `β` of that column, and `β*` is the best `β` of the
/// column. VI fits one posterior per cell, so `β* = β`. The curvature
/// families pick their bound `β` from `grid.catoni_betas`, which is then
/// also their `β*`.
pub fn grid_search(family: Family, grid: &Grid, ctx: &Certifier) -> GridResult {
    let mut out = GridResult::default();
    if let Err(e) = ctx.params.validate() {
        for &beta in &grid.betas {
            for &lambda in &grid.lambdas {
                out.failures.push(CellFailure { family, beta, lambda, message: e.to_string() });
            }
        }
        return out;
    }
    let n = ctx.train.len();
    let fam_id = family as u64;
    let nl = grid.lambdas.len();
    let fail = |beta: f64, lambda: f64, e: &Error| CellFailure { family, beta, lambda, message: e.to_string() };

    match family {
        Family::IsoZero | Family::IsoInit => {
            let columns: Vec<Result<(Posterior, McRisk)>> = grid
                .lambdas
                .par_iter()
                .enumerate()
                .map(|(li, &lambda)| {
                    let post = ctx.posterior(family, 0.0, lambda, 0)?;
                    let seed = derive_path(ctx.seed, &[stream::MONTE_CARLO, fam_id, li as u64]);
                    let risk = ctx.risk(&post, seed)?;
                    Ok((post, risk))
                })
                .collect();
            let mut cells: Vec<Option<BoundCertificate>> = vec![None; grid.len()];
            for (li, col) in columns.into_iter().enumerate() {
                let lambda = grid.lambdas[li];
                let (post, risk) = match col {
                    Ok(c) => c,
                    Err(e) => {
                        for &beta in &grid.betas {
                            out.failures.push(fail(beta, lambda, &e));
                        }
                        continue;
                    }
                };
                let seed = derive_path(ctx.seed, &[stream::MONTE_CARLO, fam_id, li as u64]);
                let mut col_certs = Vec::new();
                for (bi, &beta) in grid.betas.iter().enumerate() {
                    match assemble_bound(family, risk.mean, post.kl_nats, beta, lambda, n, &ctx.params) {
                        Ok(mut c) => {
                            c.seed = seed;
                            col_certs.push((bi, c));
                        }
                        Err(e) => out.failures.push(fail(beta, lambda, &e)),
                    }
                }
                let star =
                    col_certs.iter().min_by(|a, b| a.1.bound_value.total_cmp(&b.1.bound_value).then(a.0.cmp(&b.0))).map(|(_, c)| c.beta);
                for (bi, mut c) in col_certs {
                    if let Some(s) = star {
                        c.set_beta_star(s);
                    }
                    cells[bi * nl + li] = Some(c);
                }
            }
            out.certificates = cells.into_iter().flatten().collect();
        }
        _ => {
            let results: Vec<Result<BoundCertificate>> = (0..grid.len())
                .into_par_iter()
                .map(|cell| {
                    let (beta, lambda) = (grid.betas[cell / nl], grid.lambdas[cell % nl]);
                    let vi_seed = derive_path(ctx.seed, &[stream::VI, fam_id, cell as u64]);
                    let post = ctx.posterior(family, beta, lambda, vi_seed)?;
                    let seed = derive_path(ctx.seed, &[stream::MONTE_CARLO, fam_id, cell as u64]);
                    let risk = ctx.risk(&post, seed)?;
                    let mut cert = if family == Family::ViDiag {
                        assemble_bound(family, risk.mean, post.kl_nats, beta, lambda, n, &ctx.params)?
                    } else {
                        best_over_betas(family, risk.mean, post.kl_nats, lambda, n, &grid.catoni_betas, &ctx.params)?
                    };
                    cert.posterior_beta = post.posterior_beta;
                    cert.seed = seed;
                    Ok(cert)
                })
                .collect();
            for (cell, r) in results.into_iter().enumerate() {
                match r {
                    Ok(c) => out.certificates.push(c),
                    Err(e) => out.failures.push(fail(grid.betas[cell / nl], grid.lambdas[cell % nl], &e)),
                }
            }
        }
    }
    out
}
