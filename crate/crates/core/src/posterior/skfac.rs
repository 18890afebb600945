use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use crate::curvature::{block_hessians, BlockHessian};
use crate::error::{Error, Result};
use crate::kernel::BlockGaussian;
use crate::nnet::{NetSpec, ParamVector};

/// Per-layer block Hessians with their eigendecompositions, ready to produce
/// block posteriors for any `(β, λ)` without refactoring.
#[derive(Clone, Debug)]
pub struct SkfacCurvature {
    blocks: Vec<BlockHessian>,
    dim: usize,
}

impl SkfacCurvature {
    pub fn new(spec: &NetSpec, blocks: Vec<BlockHessian>) -> Result<Self> {
        let layout = spec.layout();
        if blocks.len() != spec.num_layers() {
            return Err(Error::DimensionMismatch { expected: spec.num_layers(), got: blocks.len() });
        }
        for (i, (b, shape)) in blocks.iter().zip(layout.layers()).enumerate() {
            if b.layer() != i || b.neurons() != shape.fan_out || b.fan_in() != shape.fan_in {
                return Err(Error::InvalidArgument(format!("block {i} does not match layer {i} of the network")));
            }
        }
        Ok(Self { blocks, dim: layout.len() })
    }

    pub fn compute(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>) -> Result<Self> {
        Self::new(spec, block_hessians(spec, theta, x)?)
    }

    pub fn blocks(&self) -> &[BlockHessian] {
        &self.blocks
    }

    /// `β(H_l + (β/λ)I)⁻¹`, shared by every neuron of `layer`.
    /// Negative eigenvalues from round-off are clipped to zero.
    pub fn block_covariance(&self, layer: usize, beta: f64, lambda: f64) -> Result<DMatrix<f64>> {
        check_positive(beta, lambda)?;
        let b = self.blocks.get(layer).ok_or_else(|| Error::InvalidArgument(format!("layer {layer} out of range")))?;
        Ok(b.spectral_map(|e| beta / (e.max(0.0) + beta / lambda)))
    }

    pub fn posterior(&self, mean: &[f64], beta: f64, lambda: f64) -> Result<BlockGaussian> {
        if mean.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: mean.len() });
        }
        let blocks = (0..self.blocks.len())
            .map(|l| Ok((l, self.blocks[l].neurons(), self.block_covariance(l, beta, lambda)?)))
            .collect::<Result<Vec<_>>>()?;
        BlockGaussian::new(mean.to_vec(), blocks)
    }

    /// `diag(H_l)` repeated for every neuron, in parameter order.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            let d: DVector<f64> = b.matrix().diagonal();
            for _ in 0..b.neurons() {
                out.extend(d.iter().copied());
            }
        }
        out
    }
}

fn check_positive(beta: f64, lambda: f64) -> Result<()> {
    if beta > 0.0 && lambda > 0.0 && beta.is_finite() && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta and lambda must be positive, got {beta} and {lambda}")))
    }
}

/// Block posterior centred at `theta` from the curvature on `x`.
pub fn skfac_posterior(spec: &NetSpec, theta: &ParamVector, x: ArrayView2<f64>, beta: f64, lambda: f64) -> Result<BlockGaussian> {
    SkfacCurvature::compute(spec, theta, x)?.posterior(theta.values(), beta, lambda)
}
