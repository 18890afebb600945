use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::nnet::{forward, NetSpec, ParamVector};

/// `H_i = (2/n) Σ a_{i−1} a_{i−1}ᵀ`, the Hessian of the layerwise
/// pre-activation error with respect to any single neuron's incoming weights.
/// Every neuron of the layer shares it. The eigendecomposition is computed once
/// and kept with eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct BlockHessian {
    layer: usize,
    neurons: usize,
    hessian: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    n_used: usize,
}

impl BlockHessian {
    /// Builds the block from the inputs `a` (one row per example) consumed by
    /// a layer of `neurons` units.
    pub fn from_inputs(layer: usize, neurons: usize, a: ArrayView2<f64>) -> Self {
        let n = a.nrows();
        let gram = a.t().dot(&a);
        let k = gram.nrows();
        let scale = 2.0 / n as f64;
        let hessian = DMatrix::from_fn(k, k, |r, c| scale * 0.5 * (gram[(r, c)] + gram[(c, r)]));
        Self::from_matrix(layer, neurons, hessian, n)
    }

    /// Rebuilds a block from a stored matrix, recomputing the eigenvectors.
    pub fn from_matrix(layer: usize, neurons: usize, hessian: DMatrix<f64>, n_used: usize) -> Self {
        let k = hessian.nrows();
        let eig = SymmetricEigen::new(hessian.clone());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let eigenvalues = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { layer, neurons, hessian, eigenvalues, eigenvectors, n_used }
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn fan_in(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Columns match [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    /// `Q diag(g(e)) Qᵀ` for a function of the eigenvalues.
    pub fn spectral_map(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let d = DVector::from_iterator(self.eigenvalues.len(), self.eigenvalues.iter().map(|&e| g(e)));
        let mut scaled = q.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(d.iter()) {
            col *= *s;
        }
        let m = &scaled * q.transpose();
        (&m + m.transpose()) * 0.5
    }
}

/// Block Hessian of one layer.
pub fn block_hessian(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, layer: usize) -> Result<BlockHessian> {
    if layer >= spec.num_layers() {
        return Err(Error::InvalidArgument(format!("layer {layer} out of range for a {}-layer network", spec.num_layers())));
    }
    let fan_out = spec.widths()[layer + 1];
    if layer == 0 {
        if x.ncols() != spec.input_dim() {
            return Err(Error::DimensionMismatch { expected: spec.input_dim(), got: x.ncols() });
        }
        return Ok(BlockHessian::from_inputs(0, fan_out, x));
    }
    let fwd = forward(spec, theta, x)?;
    Ok(BlockHessian::from_inputs(layer, fan_out, fwd.layer_input(layer)))
}

/// Block Hessians of every layer from one forward pass.
pub fn block_hessians(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>) -> Result<Vec<BlockHessian>> {
    let fwd = forward(spec, theta, x)?;
    Ok((0..spec.num_layers()).map(|i| BlockHessian::from_inputs(i, spec.widths()[i + 1], fwd.layer_input(i))).collect())
}
