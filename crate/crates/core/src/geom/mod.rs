//! Pointwise Hermitian geometry: Chern connection, torsion, curvature and the
//! quadratic coordinate changes that simplify first derivatives of a metric.

mod commute;
mod coords;
mod jet;
pub mod metrics;
mod suite;
mod tensors;

pub use commute::{commutation_defects, CommutationDefects, ScalarJet};
pub use coords::{normalize_frame, pullback_jet, special_coordinates, QuadraticChange, Variant};
pub use jet::ChartJet;
pub use metrics::{AnalyticMetric, Poly, PolyMetric};
pub use suite::{
    identity_row, identity_suite, special_coordinates_suite, IdentityRow, SpecialCoordinatesReport, BIANCHI_TOL,
    HERMITIAN_TOL, KAHLER_TORSION_TOL, SPECIAL_COORDINATES_TOL,
};
pub use tensors::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("metric is not Hermitian")]
    NotHermitian,
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
    #[error("degenerate metric: {0}")]
    Degenerate(String),
    #[error("jet carries no holomorphic second partials")]
    MissingHolomorphicPartials,
    #[error("precondition violated: {0}")]
    Precondition(String),
}
