use ndarray::{s, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, stream};
use crate::nnet::{backprop_deltas, forward, logits, softmax_rows, Head, NetSpec, ParamVector};

const CHUNK: usize = 1024;

/// Diagonal of the empirical Fisher, summed (not averaged) over inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagFisher {
    pub h: ParamVector,
    pub n_used: usize,
    pub seed: u64,
}

fn uniform(seed: u64) -> f64 {
    (seed >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `h = Σ_x [∇θ log p(ỹ | x)]²` with one label `ỹ ~ p(· | x)` drawn per input.
/// Input `i` always draws from the stream `(seed, i)`.
pub fn diag_fisher(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, seed: u64) -> Result<DiagFisher> {
    if spec.head() != Head::Softmax {
        return Err(Error::InvalidArgument("the Fisher needs a softmax head".into()));
    }
    let base = derive_seed(seed, stream::FISHER);
    let p = softmax_rows(&logits(spec, theta, x)?);
    let labels: Vec<usize> = p
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let u = uniform(derive_seed(base, i as u64));
            let mut acc = 0.0;
            for (c, &pc) in row.iter().enumerate() {
                acc += pc;
                if u < acc {
                    return c;
                }
            }
            row.len() - 1
        })
        .collect();
    let h = diag_fisher_with_labels(spec, theta, x, &labels)?;
    Ok(DiagFisher { h, n_used: x.nrows(), seed })
}

/// Fisher diagonal for given labels, one squared per-example gradient of
/// `−log p(y | x)` per row.
pub fn diag_fisher_with_labels(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, labels: &[usize]) -> Result<ParamVector> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= spec.output_dim()) {
        return Err(Error::LabelOutOfRange { label, classes: spec.output_dim() });
    }
    let starts: Vec<usize> = (0..x.nrows()).step_by(CHUNK).collect();
    let parts: Vec<Result<Vec<f64>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(x.nrows());
            let xb = x.slice(s![start..end, ..]);
            let fwd = forward(spec, theta, xb)?;
            let mut delta = softmax_rows(fwd.logits());
            for (mut row, &y) in delta.rows_mut().into_iter().zip(&labels[start..end]) {
                row[y] -= 1.0;
            }
            let deltas = backprop_deltas(theta, &fwd, delta);
            let mut h = ParamVector::zeros(theta.layout().clone());
            for (i, d) in deltas.iter().enumerate() {
                let d2 = d.mapv(|v| v * v);
                let a2 = fwd.layer_input(i).mapv(|v| v * v);
                h.layer_mut(i).assign(&d2.t().dot(&a2));
            }
            Ok(h.into_values())
        })
        .collect();
    let mut total = vec![0.0; theta.len()];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part?) {
            *t += v;
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Fisher diagonal"));
    }
    theta.with_values(total)
}

#[cfg(test)]
mod tests {
    use ndarray::{Array2, Axis};
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::kernel::rng_from;

    fn net(seed: u64) -> (NetSpec, ParamVector, Array2<f64>) {
        let spec = NetSpec::new(vec![3, 4, 3], Head::Softmax).unwrap();
        let mut rng = rng_from(seed);
        let v = (0..spec.num_params()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = Array2::from_shape_fn((7, 3), |_| rng.sample(StandardNormal));
        (spec.clone(), ParamVector::new(spec.layout(), v).unwrap(), x)
    }

    fn log_density(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, y: usize) -> f64 {
        let z = logits(spec, theta, x).unwrap();
        let row = z.row(0);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row[y] - m - row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    #[test]
    fn matches_finite_difference_squares() {
        let (spec, theta, x) = net(1);
        let labels = [0, 2, 1, 1, 0, 2, 2];
        let h = diag_fisher_with_labels(&spec, &theta, x.view(), &labels).unwrap();
        let eps = 1e-5;
        for k in 0..theta.len() {
            let mut oracle = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let xi = x.slice(s![i..i + 1, ..]);
                let mut p = theta.clone();
                p.values_mut()[k] += eps;
                let mut m = theta.clone();
                m.values_mut()[k] -= eps;
                let g = (log_density(&spec, &p, xi, y) - log_density(&spec, &m, xi, y)) / (2.0 * eps);
                oracle += g * g;
            }
            let rel = (h.values()[k] - oracle).abs() / oracle.abs().max(1e-12);
            assert!(rel < 1e-5 || (h.values()[k] - oracle).abs() < 1e-12, "{k}: {} vs {oracle}", h.values()[k]);
        }
    }

    #[test]
    fn zero_input_contributes_nothing_to_first_layer() {
        let (spec, theta, _) = net(2);
        let x = Array2::zeros((1, 3));
        let h = diag_fisher_with_labels(&spec, &theta, x.view(), &[1]).unwrap();
        assert!(h.layer(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicating_the_data_doubles_h() {
        let (spec, theta, x) = net(3);
        let labels = [1, 0, 2, 2, 1, 0, 0];
        let h = diag_fisher_with_labels(&spec, &theta, x.view(), &labels).unwrap();
        let xx = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let ll: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let h2 = diag_fisher_with_labels(&spec, &theta, xx.view(), &ll).unwrap();
        for (a, b) in h.values().iter().zip(h2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn permutation_invariant() {
        let (spec, theta, x) = net(4);
        let labels = [2, 0, 1, 1, 0, 2, 1];
        let perm = [3, 6, 0, 5, 1, 4, 2];
        let h = diag_fisher_with_labels(&spec, &theta, x.view(), &labels).unwrap();
        let xp = x.select(Axis(0), &perm);
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let hp = diag_fisher_with_labels(&spec, &theta, xp.view(), &lp).unwrap();
        for (a, b) in h.values().iter().zip(hp.values()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn chunking_does_not_change_the_sum() {
        let spec = NetSpec::new(vec![2, 3, 2], Head::Softmax).unwrap();
        let theta = ParamVector::new(spec.layout(), (0..12).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        let n = CHUNK * 2 + 17;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 3 + j) as f64 * 0.013).sin());
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let h = diag_fisher_with_labels(&spec, &theta, x.view(), &labels).unwrap();
        let mut naive = vec![0.0; 12];
        for i in 0..n {
            let hi = diag_fisher_with_labels(&spec, &theta, x.slice(s![i..i + 1, ..]), &labels[i..i + 1]).unwrap();
            for (a, b) in naive.iter_mut().zip(hi.values()) {
                *a += b;
            }
        }
        for (a, b) in h.values().iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn sampled_fisher_is_deterministic_and_nonnegative() {
        let (spec, theta, x) = net(5);
        let a = diag_fisher(&spec, &theta, x.view(), 9).unwrap();
        let b = diag_fisher(&spec, &theta, x.view(), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.h.values().iter().all(|&v| v >= 0.0));
        assert_eq!(a.n_used, 7);
        let id = NetSpec::new(vec![3, 4, 3], Head::Identity).unwrap();
        assert!(diag_fisher(&id, &theta, x.view(), 9).is_err());
    }

    #[test]
    fn sampled_fisher_averages_to_expected_fisher() {
        let (spec, theta, x) = net(6);
        let p = softmax_rows(&logits(&spec, &theta, x.view()).unwrap());
        let mut expected = vec![0.0; theta.len()];
        for i in 0..x.nrows() {
            for c in 0..3 {
                let hc = diag_fisher_with_labels(&spec, &theta, x.slice(s![i..i + 1, ..]), &[c]).unwrap();
                for (e, v) in expected.iter_mut().zip(hc.values()) {
                    *e += p[(i, c)] * v;
                }
            }
        }
        let reps = 2000;
        let mut mean = vec![0.0; theta.len()];
        for r in 0..reps {
            let f = diag_fisher(&spec, &theta, x.view(), r).unwrap();
            for (m, v) in mean.iter_mut().zip(f.h.values()) {
                *m += v / reps as f64;
            }
        }
        let num: f64 = mean.iter().zip(&expected).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = expected.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / den < 0.05, "{}", num / den);
    }
}
