//! Certificates, sweeps over `(β, λ)` and Risk–Complexity fronts.

mod bound;
mod export;
mod grid;
mod mc;
mod pareto;

pub use bound::{assemble_bound, bound_value, complexity_metric, complexity_value, BoundCertificate, BoundParams};
pub use export::{
    read_certificates, read_reference, write_certificates, write_pareto, write_reference, CERTIFICATE_HEADER, CSV_SCHEMA_VERSION,
    PARETO_HEADER, REFERENCE_HEADER, REFERENCE_LABEL,
};
pub use grid::{grid_search, linspace, logspace, CellFailure, Certifier, Grid, GridResult};
pub use mc::{draw_seed, mc_empirical_risk, McRisk};
pub use pareto::{pareto_front, reference_point, reference_star, ParetoPoint};
