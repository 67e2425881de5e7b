//! Uniform grids on flat tori and boxes in C^n, grid fields and the
//! finite-difference operators acting on them.
//!
//! Real axes are ordered x_1, y_1, x_2, y_2, ... and values are stored
//! row-major with the last axis fastest.

mod field;
mod io;
mod ops;

pub use field::{Form11Field, ScalarField};
pub use io::{read_bin, read_bin_from, write_bin, write_bin_to, write_csv, write_csv_to, CMAF_MAGIC, CMAF_VERSION};
pub use ops::{
    chern_laplacian, complex_hessian, gradient_norms, gradient_sup, integrate, neumaier_sum, Stencil,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{C64, MAX_N};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("field does not match grid: {0}")]
    Mismatch(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("function is not periodic along axis {axis} (jump {jump:.3e})")]
    NotPeriodic { axis: usize, jump: f64 },
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
    #[error("imaginary residue {0:.3e} in a real contraction")]
    ImaginaryResidue(f64),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    /// `res` points, spacing (hi - lo) / res, wraps around.
    Periodic,
    /// `res` intervals, `res + 1` points including both end points.
    Dirichlet,
    /// A single point; the field does not vary along this axis.
    Frozen,
}

impl AxisKind {
    pub fn code(self) -> u32 {
        match self {
            AxisKind::Periodic => 0,
            AxisKind::Dirichlet => 1,
            AxisKind::Frozen => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(AxisKind::Periodic),
            1 => Some(AxisKind::Dirichlet),
            2 => Some(AxisKind::Frozen),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub lo: f64,
    pub hi: f64,
    pub res: usize,
}

impl Axis {
    pub fn periodic(period: f64, res: usize) -> Self {
        Axis { kind: AxisKind::Periodic, lo: 0.0, hi: period, res }
    }

    pub fn dirichlet(lo: f64, hi: f64, res: usize) -> Self {
        Axis { kind: AxisKind::Dirichlet, lo, hi, res }
    }

    pub fn frozen(at: f64) -> Self {
        Axis { kind: AxisKind::Frozen, lo: at, hi: at, res: 1 }
    }

    pub fn points(&self) -> usize {
        match self.kind {
            AxisKind::Periodic => self.res,
            AxisKind::Dirichlet => self.res + 1,
            AxisKind::Frozen => 1,
        }
    }

    pub fn h(&self) -> f64 {
        match self.kind {
            AxisKind::Frozen => 1.0,
            _ => (self.hi - self.lo) / self.res as f64,
        }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        match self.kind {
            AxisKind::Frozen => self.lo,
            _ => self.lo + i as f64 * self.h(),
        }
    }

    pub fn active(&self) -> bool {
        self.kind != AxisKind::Frozen
    }
}

/// Tensor-product grid over 2n real axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    axes: Vec<Axis>,
    #[serde(skip)]
    shape: Vec<usize>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    len: usize,
}

const MIN_TORUS_RES: usize = 8;

impl Grid {
    pub fn new(n: usize, axes: Vec<Axis>) -> Result<Self, GridError> {
        if n == 0 || n > MAX_N {
            return Err(GridError::Invalid(format!("complex dimension {n} outside 1..={MAX_N}")));
        }
        if axes.len() != 2 * n {
            return Err(GridError::Invalid(format!("{} axes for n = {n}", axes.len())));
        }
        for (a, ax) in axes.iter().enumerate() {
            let ok = match ax.kind {
                AxisKind::Periodic => ax.res >= MIN_TORUS_RES && ax.hi > ax.lo,
                AxisKind::Dirichlet => ax.res >= 2 && ax.hi > ax.lo,
                AxisKind::Frozen => ax.res == 1,
            };
            if !ok || !ax.lo.is_finite() || !ax.hi.is_finite() {
                return Err(GridError::Invalid(format!("axis {a}: {ax:?}")));
            }
        }
        let shape: Vec<usize> = axes.iter().map(Axis::points).collect();
        let mut strides = vec![1; 2 * n];
        for a in (0..2 * n - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len = shape.iter().product();
        Ok(Grid { n, axes, shape, strides, len })
    }

    /// Rectangular torus C^n / Λ with the given periods and points per axis.
    pub fn torus(n: usize, periods: &[f64], res: &[usize]) -> Result<Self, GridError> {
        if periods.len() != 2 * n || res.len() != 2 * n {
            return Err(GridError::Invalid("need 2n periods and resolutions".into()));
        }
        Self::new(n, (0..2 * n).map(|a| Axis::periodic(periods[a], res[a])).collect())
    }

    /// Torus with equal period and resolution on every axis.
    pub fn torus_uniform(n: usize, period: f64, res: usize) -> Result<Self, GridError> {
        Self::torus(n, &vec![period; 2 * n], &vec![res; 2 * n])
    }

    /// Box prod [lo_a, hi_a] with `res[a]` intervals per axis.
    pub fn box_grid(n: usize, bounds: &[(f64, f64)], res: &[usize]) -> Result<Self, GridError> {
        if bounds.len() != 2 * n || res.len() != 2 * n {
            return Err(GridError::Invalid("need 2n bounds and resolutions".into()));
        }
        Self::new(n, (0..2 * n).map(|a| Axis::dirichlet(bounds[a].0, bounds[a].1, res[a])).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All axes periodic.
    pub fn is_torus(&self) -> bool {
        self.axes.iter().all(|a| a.kind == AxisKind::Periodic)
    }

    pub fn has_boundary(&self) -> bool {
        self.axes.iter().any(|a| a.kind == AxisKind::Dirichlet)
    }

    /// Product of the spacings of the non-frozen axes.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().filter(|a| a.active()).map(Axis::h).product()
    }

    #[inline]
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.axes.len()).rev() {
            out[a] = idx % self.shape[a];
            idx /= self.shape[a];
        }
    }

    pub fn linear_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    #[inline]
    pub fn is_boundary_m(&self, m: &[usize]) -> bool {
        self.axes
            .iter()
            .zip(m)
            .any(|(ax, &i)| ax.kind == AxisKind::Dirichlet && (i == 0 || i == ax.res))
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut m = [0usize; 2 * MAX_N];
        self.multi_index(idx, &mut m[..self.axes.len()]);
        self.is_boundary_m(&m[..self.axes.len()])
    }

    /// Boundary flag per point; all false on a torus.
    pub fn boundary_mask(&self) -> Vec<bool> {
        self.par_map(|_, m| self.is_boundary_m(m))
    }

    pub fn interior_count(&self) -> usize {
        self.axes
            .iter()
            .map(|a| match a.kind {
                AxisKind::Dirichlet => a.res - 1,
                _ => a.points(),
            })
            .product()
    }

    pub fn coords_m(&self, m: &[usize], out: &mut [f64]) {
        for (a, ax) in self.axes.iter().enumerate() {
            out[a] = ax.coord(m[a]);
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let d = self.axes.len();
        let mut m = [0usize; 2 * MAX_N];
        self.multi_index(idx, &mut m[..d]);
        let mut x = vec![0.0; d];
        self.coords_m(&m[..d], &mut x);
        x
    }

    /// Complex coordinates z_k = x_k + i y_k of a point.
    pub fn point_z(&self, idx: usize) -> Vec<C64> {
        let x = self.coords(idx);
        (0..self.n).map(|k| C64::new(x[2 * k], x[2 * k + 1])).collect()
    }

    /// Applies `f(idx, multi_index)` at every point, in parallel over the
    /// first axis; the output order is the storage order.
    pub fn par_map<T: Send>(&self, f: impl Fn(usize, &[usize]) -> T + Sync) -> Vec<T> {
        let d = self.axes.len();
        let chunk = self.strides[0];
        (0..self.shape[0])
            .into_par_iter()
            .flat_map_iter(|i0| {
                let mut m = [0usize; 2 * MAX_N];
                m[0] = i0;
                let start = i0 * chunk;
                let f = &f;
                (0..chunk).map(move |off| {
                    let r = f(start + off, &m[..d]);
                    odometer(&mut m[1..d], &self.shape[1..d]);
                    r
                })
            })
            .collect()
    }

    /// Fills `out` (`width` values per point) with `f(idx, multi_index, slot)`.
    pub fn par_fill(&self, out: &mut [f64], width: usize, f: impl Fn(usize, &[usize], &mut [f64]) + Sync) {
        assert_eq!(out.len(), self.len * width);
        let d = self.axes.len();
        let chunk = self.strides[0];
        out.par_chunks_mut(chunk * width).enumerate().for_each(|(i0, block)| {
            let mut m = [0usize; 2 * MAX_N];
            m[0] = i0;
            for off in 0..chunk {
                f(i0 * chunk + off, &m[..d], &mut block[off * width..(off + 1) * width]);
                odometer(&mut m[1..d], &self.shape[1..d]);
            }
        });
    }

    /// Rebuilds the derived index tables after deserialization.
    pub fn rebuilt(self) -> Result<Self, GridError> {
        Self::new(self.n, self.axes)
    }
}

#[inline]
fn odometer(m: &mut [usize], shape: &[usize]) {
    for a in (0..m.len()).rev() {
        m[a] += 1;
        if m[a] < shape[a] {
            return;
        }
        m[a] = 0;
    }
}
