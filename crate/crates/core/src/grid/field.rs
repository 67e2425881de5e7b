use std::sync::Arc;

use super::{AxisKind, Grid, GridError};
use crate::linalg::{pack_hermitian, unpack_hermitian, SmallMat, MAX_N};

/// Real values at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

const PERIODIC_TOL: f64 = 1e-9;

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Mismatch(format!(
                "{} values for {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.len();
        ScalarField { grid, values: vec![0.0; len] }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let len = grid.len();
        ScalarField { grid, values: vec![c; len] }
    }

    /// Samples `f` at the grid points (real coordinates x_1, y_1, ...).
    ///
    /// On periodic axes `f` must take equal values at both ends of the
    /// period; this is checked along every seam.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self, GridError> {
        let d = grid.axes().len();
        let values = grid.par_map(|_, m| {
            let mut x = [0.0; 2 * MAX_N];
            grid.coords_m(m, &mut x[..d]);
            f(&x[..d])
        });
        let scale = 1.0 + values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (a, ax) in grid.axes().iter().enumerate() {
            if ax.kind != AxisKind::Periodic {
                continue;
            }
            let mut x = vec![0.0; d];
            let mut m = vec![0usize; d];
            for idx in 0..grid.len() {
                grid.multi_index(idx, &mut m);
                if m[a] != 0 {
                    continue;
                }
                grid.coords_m(&m, &mut x);
                x[a] = ax.hi;
                let jump = (f(&x) - values[idx]).abs();
                if !(jump <= PERIODIC_TOL * scale) {
                    return Err(GridError::NotPeriodic { axis: a, jump });
                }
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |s, v| s.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// max |self - other|.
    pub fn max_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |s, (a, b)| s.max((a - b).abs()))
    }

    /// Arithmetic mean over all points (deterministic order).
    pub fn mean(&self) -> f64 {
        super::neumaier_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Uniform(SmallMat),
    /// n^2 reals per point in packed Hermitian layout.
    Sampled(Vec<f64>),
}

/// Hermitian n x n matrix at every grid point (χ, g, or χ + ∂∂̄u).
#[derive(Debug, Clone, PartialEq)]
pub struct Form11Field {
    grid: Arc<Grid>,
    storage: Storage,
}

impl Form11Field {
    /// Same matrix at every point.
    pub fn uniform(grid: Arc<Grid>, m: SmallMat) -> Result<Self, GridError> {
        if m.dim() != grid.n() {
            return Err(GridError::Mismatch(format!("matrix of size {} on n = {}", m.dim(), grid.n())));
        }
        if m.hermitian_defect() != 0.0 {
            return Err(GridError::Mismatch("matrix is not Hermitian".into()));
        }
        Ok(Form11Field { grid, storage: Storage::Uniform(m) })
    }

    pub fn identity(grid: Arc<Grid>) -> Self {
        let n = grid.n();
        Form11Field { grid, storage: Storage::Uniform(SmallMat::identity(n)) }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n();
        Form11Field { grid, storage: Storage::Uniform(SmallMat::zeros(n)) }
    }

    /// Samples `f` at each point; only the upper triangle and the real part
    /// of the diagonal are read, so the stored field is exactly Hermitian.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> SmallMat + Sync) -> Self {
        let n = grid.n();
        let d = grid.axes().len();
        let mut data = vec![0.0; grid.len() * n * n];
        grid.par_fill(&mut data, n * n, |_, m, slot| {
            let mut x = [0.0; 2 * MAX_N];
            grid.coords_m(m, &mut x[..d]);
            pack_hermitian(&f(&x[..d]), slot);
        });
        Form11Field { grid, storage: Storage::Sampled(data) }
    }

    pub(crate) fn from_packed(grid: Arc<Grid>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len() * grid.n() * grid.n());
        Form11Field { grid, storage: Storage::Sampled(data) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.storage, Storage::Uniform(_))
    }

    #[inline]
    pub fn at(&self, idx: usize) -> SmallMat {
        match &self.storage {
            Storage::Uniform(m) => *m,
            Storage::Sampled(d) => {
                let w = self.n() * self.n();
                unpack_hermitian(self.n(), &d[idx * w..(idx + 1) * w])
            }
        }
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Form11Field) -> Form11Field {
        match (&self.storage, &other.storage) {
            (Storage::Uniform(a), Storage::Uniform(b)) => {
                Form11Field { grid: self.grid.clone(), storage: Storage::Uniform(a.add(b)) }
            }
            _ => {
                let n = self.n();
                let mut data = vec![0.0; self.grid.len() * n * n];
                self.grid.par_fill(&mut data, n * n, |idx, _, slot| {
                    pack_hermitian(&self.at(idx).add(&other.at(idx)), slot);
                });
                Form11Field::from_packed(self.grid.clone(), data)
            }
        }
    }

    /// Per-point determinant (real for Hermitian matrices).
    pub fn det_field(&self) -> Vec<f64> {
        self.grid.par_map(|idx, _| self.at(idx).det().re)
    }
}
