//! Curvature around a trained network: the diagonal Fisher, per-layer
//! activation Hessians, loss-landscape probes and layerwise error propagation.

mod fisher;
mod hessian;
mod landscape;
mod propagation;

pub use fisher::{diag_fisher, diag_fisher_with_labels, DiagFisher};
pub use hessian::{block_hessian, block_hessians, BlockHessian};
pub use landscape::{
    bubble_radius, fit_quadratic, landscape_probe, probe_function, random_directions, LandscapeProbe, ProbeOptions, QuadFit,
    LANDSCAPE_SCHEMA_VERSION,
};
pub use propagation::{error_propagation_check, layer_errors, preactivation_error, LayerErrors, PropagationReport};
