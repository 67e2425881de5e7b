//! The discrete Monge-Ampère operator det(χ + ∂∂̄u) = ψ(z, u) det g, its
//! right-hand side, admissibility and linearization.

mod operator;
mod rhs;

pub use operator::{
    admissibility, concavity_defect, log_residual, ma_residual, yau_margin, LinearizedOperator,
};
pub use rhs::{regularize, Psi, RhsFlags, RhsSpec};

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Form11Field, Grid, GridError, ScalarField};

#[derive(Debug, Error)]
pub enum MaError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("subsolution rejected: {0}")]
    Subsolution(String),
    #[error("function is not admissible (min eigenvalue {lambda_min:.3e} at point {index})")]
    NotAdmissible { lambda_min: f64, index: usize },
    #[error("right-hand side vanishes or is negative at point {0}")]
    NonPositiveRhs(usize),
    #[error("right-hand side violates its declared flags: {0}")]
    RhsFlags(String),
    #[error("degenerate metric at point {0}")]
    DegenerateMetric(usize),
}

/// Threshold on the smallest generalized eigenvalue for admissibility.
pub const ADMISSIBLE_TOL: f64 = 1e-12;
const SUBSOLUTION_TOL: f64 = 1e-12;

/// Full statement of the discrete problem: grid, background metric g, the
/// form χ, the right-hand side and, on grids with a boundary, Dirichlet
/// data and an optional subsolution.
#[derive(Debug, Clone)]
pub struct MaProblem {
    grid: Arc<Grid>,
    g: Form11Field,
    chi: Form11Field,
    rhs: RhsSpec,
    boundary: Option<ScalarField>,
    subsolution: Option<ScalarField>,
    det_g: Arc<Vec<f64>>,
}

impl MaProblem {
    /// Problem on a grid without boundary.
    pub fn closed(g: Form11Field, chi: Form11Field, rhs: RhsSpec) -> Result<Self, MaError> {
        Self::build(g, chi, rhs, None, None)
    }

    /// Dirichlet problem. `boundary` supplies the values on boundary points
    /// (interior values are ignored). A subsolution, when given, must match
    /// the boundary data and satisfy det(χ_ū) ≥ ψ(z, ū) det g at every
    /// interior point.
    pub fn dirichlet(
        g: Form11Field,
        chi: Form11Field,
        rhs: RhsSpec,
        boundary: ScalarField,
        subsolution: Option<ScalarField>,
    ) -> Result<Self, MaError> {
        Self::build(g, chi, rhs, Some(boundary), subsolution)
    }

    fn build(
        g: Form11Field,
        chi: Form11Field,
        rhs: RhsSpec,
        boundary: Option<ScalarField>,
        subsolution: Option<ScalarField>,
    ) -> Result<Self, MaError> {
        let grid = g.grid().clone();
        if *chi.grid() != grid {
            return Err(MaError::Invalid("χ and g live on different grids".into()));
        }
        if grid.has_boundary() != boundary.is_some() {
            return Err(MaError::Invalid(if grid.has_boundary() {
                "grid has a boundary but no boundary data was given".into()
            } else {
                "boundary data given on a grid without boundary".into()
            }));
        }
        for f in boundary.iter().chain(subsolution.iter()) {
            if **f.grid() != *grid {
                return Err(MaError::Invalid("field lives on a different grid".into()));
            }
        }
        if subsolution.is_some() && boundary.is_none() {
            return Err(MaError::Invalid("subsolutions are only used for Dirichlet problems".into()));
        }
        rhs.check_len(grid.len())?;
        let det_g = Arc::new(g.det_field());
        if let Some(i) = det_g.iter().position(|d| !(*d > 0.0)) {
            return Err(MaError::DegenerateMetric(i));
        }
        let prob = MaProblem { grid, g, chi, rhs, boundary, subsolution, det_g };
        if let Some(sub) = &prob.subsolution {
            prob.check_subsolution(sub)?;
        }
        Ok(prob)
    }

    fn check_subsolution(&self, sub: &ScalarField) -> Result<(), MaError> {
        let bd = self.boundary.as_ref().expect("checked by caller");
        let mask = self.grid.boundary_mask();
        for (i, &b) in mask.iter().enumerate() {
            if b && sub.values()[i] != bd.values()[i] {
                return Err(MaError::Subsolution(format!(
                    "differs from the boundary data at point {i}: {} vs {}",
                    sub.values()[i],
                    bd.values()[i]
                )));
            }
        }
        let (ok, lam, at) = admissibility_with_index(sub, self);
        if !ok {
            return Err(MaError::Subsolution(format!("not admissible: λ_min = {lam:.3e} at point {at}")));
        }
        let res = ma_residual(sub, self);
        for (i, r) in res.values().iter().enumerate() {
            let scale = self.det_g[i].max(1.0);
            if *r < -SUBSOLUTION_TOL * scale {
                return Err(MaError::Subsolution(format!(
                    "det(χ_ū) - ψ det g = {r:.3e} < 0 at point {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn g(&self) -> &Form11Field {
        &self.g
    }
    pub fn chi(&self) -> &Form11Field {
        &self.chi
    }
    pub fn rhs(&self) -> &RhsSpec {
        &self.rhs
    }
    pub fn boundary(&self) -> Option<&ScalarField> {
        self.boundary.as_ref()
    }
    pub fn subsolution(&self) -> Option<&ScalarField> {
        self.subsolution.as_ref()
    }
    #[inline]
    pub fn det_g(&self, idx: usize) -> f64 {
        self.det_g[idx]
    }

    /// Same problem with a different right-hand side; the subsolution is
    /// re-validated against it.
    pub fn with_rhs(&self, rhs: RhsSpec) -> Result<Self, MaError> {
        Self::build(self.g.clone(), self.chi.clone(), rhs, self.boundary.clone(), self.subsolution.clone())
    }

    /// Same problem without the subsolution.
    pub fn without_subsolution(&self) -> Self {
        MaProblem { subsolution: None, ..self.clone() }
    }

    /// Copies the boundary data into `u` on boundary points.
    pub fn impose_boundary(&self, u: &mut ScalarField) {
        if let Some(bd) = &self.boundary {
            let mask = self.grid.boundary_mask();
            let v = u.values_mut();
            for (i, b) in mask.iter().enumerate() {
                if *b {
                    v[i] = bd.values()[i];
                }
            }
        }
    }
}

pub(crate) use operator::admissibility_with_index;
