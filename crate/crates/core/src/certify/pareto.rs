use serde::{Deserialize, Serialize};

use super::bound::BoundCertificate;
use crate::error::{Error, Result};
use crate::nnet::TrainRecord;
use crate::posterior::Family;

/// `(empirical risk, complexity)` with the cell it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub x: f64,
    pub y: f64,
    pub family: Option<Family>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: u64,
}

impl ParetoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, family: None, beta: None, lambda: None, seed: 0 }
    }

    pub fn from_certificate(c: &BoundCertificate) -> Self {
        Self { x: c.emp_risk, y: c.complexity, family: Some(c.family), beta: Some(c.beta), lambda: Some(c.lambda), seed: c.seed }
    }

    /// At least as good in both coordinates and better in one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.x <= other.x && self.y <= other.y && (self.x < other.x || self.y < other.y)
    }
}

/// Non-dominated points sorted by `x`; identical points are all kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().filter(|p| !p.x.is_nan() && !p.y.is_nan()).collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut front = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for p in sorted {
        let keep = match best {
            None => true,
            Some((bx, by)) => p.y < by || (p.y == by && p.x == bx),
        };
        if keep {
            if best.is_none_or(|(_, by)| p.y < by) {
                best = Some((p.x, p.y));
            }
            front.push(p.clone());
        }
    }
    front
}

/// Where a certificate would sit if it were exactly the test error:
/// `x` is the train error, `y = max(0, test − train)`.
pub fn reference_star(record: &TrainRecord) -> Result<ParetoPoint> {
    let test = record.test_error.ok_or(Error::MissingTestSplit)?;
    Ok(reference_point(record.train_error, test))
}

pub fn reference_point(train_error: f64, test_error: f64) -> ParetoPoint {
    ParetoPoint::new(train_error, (test_error - train_error).max(0.0))
}
