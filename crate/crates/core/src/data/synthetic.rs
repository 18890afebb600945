use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::kernel::rng::{derive_seed, rng_from, stream};

/// Gaussian class clusters with unit noise.
///
/// When `k <= d` the class means are `separation/√2` times random orthonormal
/// directions, so every pair of means is exactly `separation` apart and the
/// signal is spread over all features. Otherwise means are random directions
/// of the same norm. Splits drawn from one spec share the class means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobSpec {
    pub d: usize,
    pub k: usize,
    pub separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn means(&self) -> Array2<f64> {
        let radius = self.separation / std::f64::consts::SQRT_2;
        let mut rng = rng_from(derive_seed(self.seed, stream::BLOBS));
        let mut means = Array2::from_shape_fn((self.k, self.d), |_| rng.sample::<f64, _>(StandardNormal));
        let orthogonal = self.k <= self.d;
        for c in 0..self.k {
            if orthogonal {
                // Gram-Schmidt against the earlier rows.
                for prev in 0..c {
                    let proj = means.row(c).dot(&means.row(prev));
                    let p = means.row(prev).to_owned();
                    means.row_mut(c).scaled_add(-proj, &p);
                }
            }
            let mut row = means.row_mut(c);
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        means.mapv_inplace(|v| v * radius);
        means
    }

    /// `n` points with uniformly drawn labels. `stream_id` picks the split's
    /// random stream.
    pub fn draw(&self, n: usize, stream_id: u64, split: Split) -> Result<Dataset> {
        if n == 0 || self.d == 0 || self.k == 0 {
            return Err(Error::InvalidArgument("n, d and k must be positive".into()));
        }
        let means = self.means();
        let mut rng = rng_from(derive_seed(derive_seed(self.seed, stream::BLOBS), stream_id + 1));
        let mut y = Vec::with_capacity(n);
        let mut x = Array2::zeros((n, self.d));
        for mut row in x.rows_mut() {
            let c = rng.random_range(0..self.k);
            y.push(c);
            for (j, v) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = means[(c, j)] + z;
            }
        }
        Dataset::new(x, y, self.k, split)
    }

    pub fn train_test(&self, n_train: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
        Ok((self.draw(n_train, 0, Split::Train)?, self.draw(n_test, 1, Split::Test)?))
    }
}

/// Training split of [`BlobSpec`] `{d, k, separation, seed}` with `n` points.
pub fn synthetic_blobs(n: usize, d: usize, k: usize, separation: f64, seed: u64) -> Result<Dataset> {
    BlobSpec { d, k, separation, seed }.draw(n, 0, Split::Train)
}
