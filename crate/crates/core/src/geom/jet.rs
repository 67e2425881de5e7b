use ndarray::{Array2, Array3, Array4};

use super::GeomError;
use crate::linalg::{SmallMat, C64, MAX_N};

/// Metric components g_{i\bar j} at a point together with their coordinate
/// partials.
///
/// * `dg[[i, j, k]]   = d g_{i\bar j} / d z_k`
/// * `ddg[[i, j, k, l]] = d^2 g_{i\bar j} / d z_k d\bar z_l`
/// * `hdg[[i, j, k, l]] = d^2 g_{i\bar j} / d z_k d z_l` (optional; only the
///   third-order holomorphic commutators need it)
///
/// Antiholomorphic first partials are never stored: they follow from
/// `d g_{i\bar j} / d\bar z_k = conj(dg[[j, i, k]])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartJet {
    pub g: Array2<C64>,
    pub dg: Array3<C64>,
    pub ddg: Array4<C64>,
    pub hdg: Option<Array4<C64>>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl ChartJet {
    /// Builds a jet and checks Hermitian symmetry, positivity and the mixed
    /// partial symmetry of `ddg`.
    pub fn new(
        g: Array2<C64>,
        dg: Array3<C64>,
        ddg: Array4<C64>,
        hdg: Option<Array4<C64>>,
    ) -> Result<Self, GeomError> {
        let n = g.nrows();
        if n == 0 || n > MAX_N || g.ncols() != n {
            return Err(GeomError::Shape(format!("metric block is {:?}", g.dim())));
        }
        if dg.dim() != (n, n, n) || ddg.dim() != (n, n, n, n) {
            return Err(GeomError::Shape("partials do not match dimension".into()));
        }
        if let Some(h) = &hdg {
            if h.dim() != (n, n, n, n) {
                return Err(GeomError::Shape("holomorphic second partials do not match".into()));
            }
        }
        let jet = ChartJet { g, dg, ddg, hdg };
        let scale = 1.0 + jet.g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                if (jet.g[[i, j]] - jet.g[[j, i]].conj()).norm() > SYMMETRY_TOL * scale {
                    return Err(GeomError::NotHermitian);
                }
            }
        }
        let dscale = 1.0 + jet.ddg.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let d = jet.ddg[[i, j, k, l]] - jet.ddg[[j, i, l, k]].conj();
                        if d.norm() > SYMMETRY_TOL * dscale {
                            return Err(GeomError::NotHermitian);
                        }
                    }
                }
            }
        }
        if jet.metric().cholesky().is_err() {
            return Err(GeomError::NotPositiveDefinite);
        }
        Ok(jet)
    }

    /// Constant metric: all partials vanish.
    pub fn constant(g: Array2<C64>) -> Result<Self, GeomError> {
        let n = g.nrows();
        Self::new(
            g,
            Array3::zeros((n, n, n)),
            Array4::zeros((n, n, n, n)),
            Some(Array4::zeros((n, n, n, n))),
        )
    }

    pub fn flat(n: usize) -> Self {
        Self::constant(Array2::eye(n).mapv(|x: f64| C64::new(x, 0.0))).expect("identity is a metric")
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn metric(&self) -> SmallMat {
        SmallMat::from_fn(self.dim(), |i, j| self.g[[i, j]])
    }

    /// d g_{i\bar j} / d\bar z_k.
    #[inline]
    pub fn dbar(&self, i: usize, j: usize, k: usize) -> C64 {
        self.dg[[j, i, k]].conj()
    }

    /// Whether d g_{j\bar l}/dz_i = d g_{i\bar l}/dz_j holds to `tol`.
    pub fn kahler_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if (self.dg[[j, l, i]] - self.dg[[i, l, j]]).norm() > tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Inverse metric g^{i\bar j}, returned as
    /// the matrix `N[[i, j]] = g^{i\bar j}` with `sum_j N[i,j] g_{k\bar j} = delta_ik`.
    pub fn inverse_metric(&self) -> Result<Array2<C64>, GeomError> {
        let n = self.dim();
        let inv = self
            .metric()
            .inverse()
            .map_err(|e| GeomError::Degenerate(format!("{e:?}")))?;
        // N = (M^{-1})^T
        Ok(Array2::from_shape_fn((n, n), |(i, j)| inv[(j, i)]))
    }
}
