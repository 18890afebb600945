use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::curvature::BlockHessian;
use crate::kernel::rng_from;
use crate::nnet::{Head, NetSpec};

/// Golden-section minimizer on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

#[test]
fn zero_curvature_returns_scaled_prior() {
    let p = [0.5, 2.0, 3.0];
    let s = closed_form_diag(&[0.0; 3], 1.7, 0.3, &p).unwrap();
    for (si, pi) in s.iter().zip(p) {
        assert!((si - 0.3 * pi).abs() < 1e-15);
    }
    let prior = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let m = closed_form_matrix(&DMatrix::zeros(2, 2), 1.0, 0.1, &prior).unwrap();
    assert!((m - prior * 0.1).abs().max() < 1e-14);
}

#[test]
fn unit_instance_is_one_half() {
    let s = closed_form_diag(&[1.0], 1.0, 1.0, &[1.0]).unwrap()[0];
    assert_eq!(s, 0.5);
    let oracle = golden_min(|x| coordinate_objective(1.0, x.exp(), 1.0, 1.0, 1.0, 0.0), -20.0, 20.0).exp();
    assert!((oracle - 0.5).abs() < 1e-8);
}

/// Cyclic coordinate descent on the summed objective, each coordinate
/// minimized by golden section in log space.
fn coordinate_descent(h: &[f64], beta: f64, lambda: f64, prior: &[f64], gap: &[f64]) -> Vec<f64> {
    let mut s = vec![1.0; h.len()];
    for _ in 0..3 {
        for i in 0..h.len() {
            let f = |x: f64| {
                let mut trial = s.clone();
                trial[i] = x.exp();
                diag_objective(h, &trial, beta, lambda, prior, gap).unwrap()
            };
            s[i] = golden_min(f, -60.0, 60.0).exp();
        }
    }
    s
}

#[test]
fn closed_form_matches_coordinate_descent() {
    let mut rng = rng_from(11);
    for _ in 0..20 {
        let d = rng.random_range(1..=10);
        let h: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
        let p: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
        let gap: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let beta = log_uniform(&mut rng, 1e-3, 1e3);
        let lambda = log_uniform(&mut rng, 1e-3, 1e3);
        let exact = closed_form_diag(&h, beta, lambda, &p).unwrap();
        let oracle = coordinate_descent(&h, beta, lambda, &p, &gap);
        for (e, o) in exact.iter().zip(&oracle) {
            assert!((e - o).abs() <= 1e-4 * e, "{e} vs {o}");
        }
    }
}

#[test]
fn closed_form_is_stationary() {
    let mut rng = rng_from(12);
    for _ in 0..20 {
        let d = rng.random_range(1..=10);
        let h: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
        let p: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
        let gap = vec![0.0; d];
        let (beta, lambda) = (log_uniform(&mut rng, 1e-3, 1e3), log_uniform(&mut rng, 1e-3, 1e3));
        let s = closed_form_diag(&h, beta, lambda, &p).unwrap();
        let f = |v: &[f64]| diag_objective(&h, v, beta, lambda, &p, &gap).unwrap();
        let scale = f(&s).abs().max(1.0);
        // Central differences in log-variance.
        let mut norm = 0.0;
        for i in 0..d {
            let step: f64 = 1e-5;
            let mut up = s.clone();
            let mut dn = s.clone();
            up[i] *= step.exp();
            dn[i] *= (-step).exp();
            norm += ((f(&up) - f(&dn)) / (2.0 * step)).powi(2);
        }
        assert!(norm.sqrt() < 1e-6 * scale, "{} vs {scale}", norm.sqrt());
    }
}

#[test]
fn matrix_form_agrees_with_diagonal_and_beats_probes() {
    let mut rng = rng_from(13);
    let a = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let h = &a * a.transpose();
    let b = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior = &b * b.transpose() + DMatrix::identity(4, 4);
    let delta = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (beta, lambda) = (0.7, 0.2);
    let opt = closed_form_matrix(&h, beta, lambda, &prior).unwrap();
    let best = matrix_objective(&h, &opt, beta, lambda, &prior, &delta).unwrap();
    for _ in 0..200 {
        let e = DMatrix::from_fn(4, 4, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let trial = &opt + (&e + e.transpose()) * 0.5;
        if let Ok(v) = matrix_objective(&h, &trial, beta, lambda, &prior, &delta) {
            assert!(v >= best - 1e-12 * best.abs());
        }
    }
    let hd = [0.3, 2.0];
    let diag = closed_form_diag(&hd, beta, lambda, &[1.5, 0.4]).unwrap();
    let m = closed_form_matrix(
        &DMatrix::from_diagonal(&DVector::from_column_slice(&hd)),
        beta,
        lambda,
        &DMatrix::from_diagonal(&DVector::from_column_slice(&[1.5, 0.4])),
    )
    .unwrap();
    assert!((m[(0, 0)] - diag[0]).abs() < 1e-14 && (m[(1, 1)] - diag[1]).abs() < 1e-14);
}

#[test]
fn rejects_bad_inputs() {
    assert!(closed_form_diag(&[1.0], 0.0, 1.0, &[1.0]).is_err());
    assert!(closed_form_diag(&[-1.0], 1.0, 1.0, &[1.0]).is_err());
    assert!(closed_form_diag(&[1.0], 1.0, 1.0, &[0.0]).is_err());
    assert!(closed_form_diag(&[1.0, 2.0], 1.0, 1.0, &[1.0]).is_err());
    assert!(joint_optimal_diag(&[f64::NAN], 1.0, 1.0, &[1.0], &[0.0]).is_err());
}

#[test]
fn golden_ratio_instance() {
    let j = joint_optimal_diag(&[1.0], 1.0, 1.0, &[1.0], &[0.0]).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((j.posterior_var[0] - 1.0 / phi).abs() < 1e-12);
    assert!((j.prior_var[0] - phi).abs() < 1e-12);
    assert!((j.posterior_var[0] - 0.61803).abs() < 1e-5 && (j.prior_var[0] - 1.61803).abs() < 1e-5);
    assert_eq!(j.floored, 0);
}

/// Draws `(h, β, λ, Δμ²)` log-uniformly.
fn joint_instance(rng: &mut impl Rng) -> (f64, f64, f64, f64) {
    (log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2))
}

#[test]
fn joint_optimum_beats_grid() {
    let mut rng = rng_from(14);
    let grid: Vec<f64> = (0..200).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 199.0)).collect();
    for _ in 0..50 {
        let (h, beta, lambda, gap) = joint_instance(&mut rng);
        let j = joint_optimal_diag(&[h], beta, lambda, &[gap.sqrt()], &[0.0]).unwrap();
        let best = coordinate_objective(h, j.posterior_var[0], beta, lambda, j.prior_var[0], gap);
        let mut grid_min = f64::INFINITY;
        for &s in &grid {
            for &p in &grid {
                grid_min = grid_min.min(coordinate_objective(h, s, beta, lambda, p, gap));
            }
        }
        assert!(best <= grid_min + 1e-12 * grid_min.abs(), "{best} > {grid_min}");
    }
}

#[test]
fn joint_optimum_is_consistent_with_closed_form() {
    let mut rng = rng_from(15);
    for _ in 0..200 {
        let (h, beta, lambda, gap) = joint_instance(&mut rng);
        let j = joint_optimal_diag(&[h], beta, lambda, &[gap.sqrt()], &[0.0]).unwrap();
        let back = closed_form_diag(&[h], beta, lambda, &j.prior_var).unwrap()[0];
        assert!((back - j.posterior_var[0]).abs() <= 1e-10 * j.posterior_var[0]);
    }
}

#[test]
fn joint_posterior_concentrates_as_beta_vanishes() {
    let mut last = f64::INFINITY;
    for beta in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10] {
        let s = joint_optimal_diag(&[1.0], beta, 1.0, &[1.0], &[0.0]).unwrap().posterior_var[0];
        assert!(s < last);
        last = s;
    }
    assert!(last < 1e-9);
}

#[test]
fn zero_curvature_and_gap_are_floored() {
    let j = joint_optimal_diag(&[0.0, 1.0, 1.0], 1.0, 1.0, &[1.0, 0.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(j.floored, 2);
    assert!(j.posterior_var.iter().chain(&j.prior_var).all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn isotropic_kl_examples() {
    let (q, p) = isotropic_posterior(&[1.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
    assert!((kl_diag(&q, &p).unwrap() - 1.0).abs() < 1e-15);
    let same = Posterior::isotropic(&[0.3, -0.2], Some(&[0.3, -0.2]), 0.1).unwrap();
    assert_eq!(same.kl_nats, 0.0);
    assert_eq!(same.family, Family::IsoInit);
    let zero = Posterior::isotropic(&[1.0, 2.0], None, 0.5).unwrap();
    let init = Posterior::isotropic(&[1.0, 2.0], Some(&[0.9, 1.5]), 0.5).unwrap();
    assert_eq!(zero.family, Family::IsoZero);
    assert!(init.kl_nats < zero.kl_nats);
    assert!((zero.kl_nats - 5.0 / (2.0 * 0.5)).abs() < 1e-12);
}

#[test]
fn validity_follows_family() {
    let t = [0.5, -0.5];
    let t0 = [0.0, 0.1];
    let h = [1.0, 0.2];
    let joint = Posterior::closed_joint(&t, &t0, &h, 1.0, 0.1).unwrap();
    assert_eq!(joint.validity, Validity::InvalidPrior);
    let diag = Posterior::closed_diag(&t, &t0, &h, 1.0, 0.1).unwrap();
    assert_eq!(diag.validity, Validity::Valid);
    for f in Family::ALL {
        assert_eq!(Family::parse(f.name()).unwrap(), f);
        assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.name()));
        assert_eq!(f.validity() == Validity::InvalidPrior, f == Family::ClosedJoint);
    }
    assert!(Family::parse("laplace").is_err());
}

fn random_psd(rng: &mut impl Rng, k: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k + 2, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose()
}

#[test]
fn skfac_block_beats_random_psd_probes() {
    let mut rng = rng_from(16);
    let h = random_psd(&mut rng, 3, 1.0);
    let (beta, lambda) = (0.5, 0.3);
    let opt = closed_form_matrix(&h, beta, lambda, &DMatrix::identity(3, 3)).unwrap();
    let best = block_objective(&h, &opt, 1, beta, lambda, 0.0).unwrap();
    let mut checked = 0;
    while checked < 1000 {
        let sign = if checked % 2 == 0 { 1.0 } else { -1.0 };
        let trial = &opt + random_psd(&mut rng, 3, 0.1) * sign;
        if let Ok(v) = block_objective(&h, &trial, 1, beta, lambda, 0.0) {
            assert!(v >= best - 1e-12 * best.abs(), "{v} < {best}");
            checked += 1;
        }
    }
}

fn toy_curvature(spec: &NetSpec, seed: u64) -> SkfacCurvature {
    let mut rng = rng_from(seed);
    let blocks = spec
        .layout()
        .layers()
        .iter()
        .enumerate()
        .map(|(l, shape)| {
            let a = ndarray::Array2::from_shape_fn((7, shape.fan_in), |_| rng.random::<f64>());
            BlockHessian::from_inputs(l, shape.fan_out, a.view())
        })
        .collect();
    SkfacCurvature::new(spec, blocks).unwrap()
}

#[test]
fn skfac_dead_layer_gives_lambda() {
    let spec = NetSpec::new(vec![3, 2, 2], Head::Softmax).unwrap();
    let blocks = vec![
        BlockHessian::from_inputs(0, 2, ndarray::Array2::zeros((4, 3)).view()),
        BlockHessian::from_inputs(1, 2, ndarray::Array2::zeros((4, 2)).view()),
    ];
    let curv = SkfacCurvature::new(&spec, blocks).unwrap();
    let cov = curv.block_covariance(0, 2.0, 0.07).unwrap();
    assert!((cov - DMatrix::identity(3, 3) * 0.07).abs().max() < 1e-15);
}

#[test]
fn skfac_with_unit_fan_in_is_diagonal_closed_form() {
    let spec = NetSpec::new(vec![1, 1, 1, 1], Head::Identity).unwrap();
    let curv = toy_curvature(&spec, 3);
    let (beta, lambda) = (0.4, 0.2);
    let q = curv.posterior(&[0.1, 0.2, 0.3], beta, lambda).unwrap();
    let diag = closed_form_diag(&curv.diagonal(), beta, lambda, &[1.0; 3]).unwrap();
    for (b, d) in q.blocks().iter().zip(&diag) {
        assert!((b.covariance()[(0, 0)] - d).abs() < 1e-15);
    }
    assert!(curv.posterior(&[0.0; 2], beta, lambda).is_err());
}

#[test]
fn families_dominate_under_quadratic_model() {
    let spec = NetSpec::new(vec![4, 5, 3, 2], Head::Softmax).unwrap();
    let curv = toy_curvature(&spec, 4);
    for (beta, lambda) in [(0.1, 0.01), (1.0, 0.1), (3.0, 2.0)] {
        let h = curv.diagonal();
        let d = h.len();
        let ones = vec![1.0; d];
        let gaps = vec![0.0; d];
        let diag = closed_form_diag(&h, beta, lambda, &ones).unwrap();
        let iso = diag_objective(&h, &vec![lambda; d], beta, lambda, &ones, &gaps).unwrap();
        let closed = diag_objective(&h, &diag, beta, lambda, &ones, &gaps).unwrap();
        assert!(closed <= iso);
        for (l, b) in curv.blocks().iter().enumerate() {
            let k = b.fan_in();
            let block = curv.block_covariance(l, beta, lambda).unwrap();
            let restricted =
                DMatrix::from_diagonal(&DVector::from_iterator(k, b.matrix().diagonal().iter().map(|&hi| beta / (hi + beta / lambda))));
            let full = block_objective(b.matrix(), &block, b.neurons(), beta, lambda, 0.0).unwrap();
            let diag_obj = block_objective(b.matrix(), &restricted, b.neurons(), beta, lambda, 0.0).unwrap();
            assert!(full <= diag_obj + 1e-12 * diag_obj.abs());
        }
    }
}

#[test]
fn skfac_kl_matches_diagonal_when_blocks_are_diagonal() {
    let spec = NetSpec::new(vec![1, 1, 1, 1], Head::Identity).unwrap();
    let curv = toy_curvature(&spec, 5);
    let t = [0.3, -0.1, 0.8];
    let t0 = [0.0, 0.2, 0.1];
    let block = Posterior::skfac(&curv, &t, &t0, 0.5, 0.2).unwrap();
    let diag = Posterior::closed_diag(&t, &t0, &curv.diagonal(), 0.5, 0.2).unwrap();
    assert!((block.kl_nats - diag.kl_nats).abs() < 1e-12);
}

fn vi_quadratic(d: usize, seed: u64) -> (QuadraticLoss, Vec<f64>) {
    let mut rng = rng_from(seed);
    let h: Vec<f64> = (0..d).map(|_| log_uniform(&mut rng, 1e-4, 1.0)).collect();
    let center: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    (QuadraticLoss { center: center.clone(), h, n: 5000 }, center)
}

#[test]
fn vi_recovers_closed_form_on_quadratic_loss() {
    let (loss, center) = vi_quadratic(100, 6);
    let (beta, lambda) = (1.0, 0.1);
    let cfg = ViConfig { batch_size: 5, ..ViConfig::default() };
    let res = vi_optimize_diag(&loss, &center, &vec![0.0; 100], beta, lambda, &cfg, 1).unwrap();
    // Under this loss the KL weight 1/(βn) plays the role of β.
    let a = 1.0 / (beta * loss.n as f64);
    let exact = closed_form_diag(&loss.h, a, lambda, &vec![1.0; 100]).unwrap();
    let mut rel: Vec<f64> = res.posterior.variance().iter().zip(&exact).map(|(v, e)| (v - e).abs() / e).collect();
    rel.sort_by(f64::total_cmp);
    assert!(rel[50] < 0.05, "median relative error {}", rel[50]);
    assert_eq!(res.history.len(), 5);
}

#[test]
fn vi_reverts_to_prior_when_kl_dominates() {
    let (loss, center) = vi_quadratic(10, 7);
    let loss = QuadraticLoss { n: 100, ..loss };
    let cfg = ViConfig { batch_size: 10, epochs: 50, ..ViConfig::default() };
    let res = vi_optimize_diag(&loss, &center, &center, 1e-9, 0.3, &cfg, 2).unwrap();
    for v in res.posterior.variance() {
        assert!((v - 0.3).abs() < 1e-3, "{v}");
    }
}

#[test]
fn vi_is_deterministic() {
    let (loss, center) = vi_quadratic(20, 8);
    let cfg = ViConfig { batch_size: 50, ..ViConfig::default() };
    let a = vi_optimize_diag(&loss, &center, &center, 1.0, 0.1, &cfg, 3).unwrap();
    let b = vi_optimize_diag(&loss, &center, &center, 1.0, 0.1, &cfg, 3).unwrap();
    assert_eq!(a.posterior, b.posterior);
    assert_eq!(a.surrogate.to_bits(), b.surrogate.to_bits());
    let c = vi_optimize_diag(&loss, &center, &center, 1.0, 0.1, &cfg, 4).unwrap();
    assert_ne!(a.posterior, c.posterior);
}

#[test]
fn vi_runs_on_a_network() {
    use crate::data::BlobSpec;
    use crate::nnet::LossKind;
    let (data, _) = BlobSpec { d: 4, k: 2, separation: 4.0, seed: 2 }.train_test(64, 1).unwrap();
    let spec = NetSpec::new(vec![4, 6, 2], Head::Softmax).unwrap();
    let theta: Vec<f64> = (0..spec.num_params()).map(|i| 0.1 * (i as f64).sin()).collect();
    let loss = NetLoss { spec: &spec, data: &data, kind: LossKind::Categorical };
    let cfg = ViConfig { epochs: 2, batch_size: 16, ..ViConfig::default() };
    let res = vi_optimize_diag(&loss, &theta, &vec![0.0; theta.len()], 1.0, 0.05, &cfg, 0).unwrap();
    assert!(res.surrogate.is_finite());
    let post = Posterior::vi_diag(res.posterior, &vec![0.0; theta.len()], 1.0, 0.05).unwrap();
    assert!(post.kl_nats > 0.0);
    let bad = ViConfig { batch_size: 0, ..cfg };
    assert!(vi_optimize_diag(&loss, &theta, &theta, 1.0, 0.05, &bad, 0).is_err());
}

proptest! {
    #[test]
    fn closed_diag_never_exceeds_prior(h in 0.0f64..1e3, beta in 1e-3f64..1e3, lambda in 1e-3f64..1e3) {
        let s = closed_form_diag(&[h], beta, lambda, &[1.0]).unwrap()[0];
        prop_assert!(s > 0.0 && s <= lambda * (1.0 + 1e-15));
    }

    #[test]
    fn joint_identity_holds(h in 1e-6f64..1e6, beta in 1e-6f64..1e6, lambda in 1e-6f64..1e6, gap in 1e-6f64..1e6) {
        let j = joint_optimal_diag(&[h], beta, lambda, &[gap], &[0.0]).unwrap();
        let back = closed_form_diag(&[h], beta, lambda, &j.prior_var).unwrap()[0];
        prop_assert!((back - j.posterior_var[0]).abs() <= 1e-10 * j.posterior_var[0]);
    }
}
