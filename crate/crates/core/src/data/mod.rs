//! Datasets: MNIST-format IDX files, CIFAR-10 binary batches, class
//! collapsing, and synthetic Gaussian blobs for desk-scale runs.

mod formats;
mod synthetic;

pub use formats::{load_cifar_bin, load_idx, read_dataset, write_dataset};
pub use synthetic::{synthetic_blobs, BlobSpec};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A labelled design matrix: one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<usize>,
    k: usize,
    split: Split,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, k: usize, split: Split) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self { x, y, k, split })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { x: self.x.select(Axis(0), indices), y: indices.iter().map(|&i| self.y[i]).collect(), k: self.k, split: self.split }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn with_split(mut self, split: Split) -> Dataset {
        self.split = split;
        self
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }
}

/// Merges the ten original classes into contiguous groups:
/// `k_new = 2` maps `y ↦ ⌊y/5⌋`, `k_new = 5` maps `y ↦ ⌊y/2⌋`.
pub fn collapse_classes(d: &Dataset, k_new: usize) -> Result<Dataset> {
    if d.k != 10 {
        return Err(Error::InvalidArgument(format!("class collapsing needs a 10-class dataset, got {} classes", d.k)));
    }
    let width = match k_new {
        2 => 5,
        5 => 2,
        other => return Err(Error::InvalidArgument(format!("can only collapse to 2 or 5 classes, not {other}"))),
    };
    Ok(Dataset { x: d.x.clone(), y: d.y.iter().map(|&l| l / width).collect(), k: k_new, split: d.split })
}

/// Per-feature min–max scaling fitted on one split and applied to others.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMax {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl MinMax {
    pub fn fit(d: &Dataset) -> Self {
        let cols = d.dim();
        let mut lo = vec![f64::INFINITY; cols];
        let mut hi = vec![f64::NEG_INFINITY; cols];
        for row in d.x.rows() {
            for (c, &v) in row.iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        Self { lo, hi }
    }

    /// Maps each feature into `[0, 1]`, clamping values outside the fitted range.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.dim() != self.lo.len() {
            return Err(Error::DimensionMismatch { expected: self.lo.len(), got: d.dim() });
        }
        let mut x = d.x.clone();
        for mut row in x.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                let span = self.hi[c] - self.lo[c];
                *v = if span > 0.0 { ((*v - self.lo[c]) / span).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Dataset::new(x, d.y.clone(), d.k, d.split)
    }
}
