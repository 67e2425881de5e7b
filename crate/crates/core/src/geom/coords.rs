use ndarray::{Array2, Array3, Array4};

use super::{ChartJet, GeomError};
use crate::linalg::{SmallMat, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Holomorphic change of coordinates about the base point,
/// `w_r = sum_i A[r,i] z_i + 1/2 sum_{i,k} Q[r,i,k] z_i z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticChange {
    pub linear: SmallMat,
    /// Symmetric in the last two indices.
    pub quad: Array3<C64>,
}

impl QuadraticChange {
    pub fn identity(n: usize) -> Self {
        QuadraticChange { linear: SmallMat::identity(n), quad: Array3::zeros((n, n, n)) }
    }

    pub fn linear(a: SmallMat) -> Self {
        let n = a.dim();
        QuadraticChange { linear: a, quad: Array3::zeros((n, n, n)) }
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn max_quadratic(&self) -> f64 {
        self.quad.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Image w(z) of a point near the base point.
    pub fn apply(&self, z: &[C64]) -> Vec<C64> {
        let n = self.dim();
        (0..n)
            .map(|r| {
                let mut w = ZERO;
                for i in 0..n {
                    w += self.linear[(r, i)] * z[i];
                    for k in 0..n {
                        w += 0.5 * self.quad[[r, i, k]] * z[i] * z[k];
                    }
                }
                w
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Kills all first derivatives of the diagonal entries.
    Primary,
    /// Kills d g_{i\bar j} / d w_j for every (i, j).
    Alternate,
}

/// Linear change making the metric the identity at the base point:
/// with g = L L^* (Cholesky), w = L^T z.
pub fn normalize_frame(jet: &ChartJet) -> Result<QuadraticChange, GeomError> {
    let l = jet.metric().cholesky().map_err(|_| GeomError::NotPositiveDefinite)?;
    Ok(QuadraticChange::linear(l.transpose()))
}

const IDENTITY_TOL: f64 = 1e-12;

/// Quadratic change w = z + Q(z, z)/2 for a jet whose metric is the identity.
pub fn special_coordinates(jet: &ChartJet, variant: Variant) -> Result<QuadraticChange, GeomError> {
    let n = jet.dim();
    let defect = jet.metric().sub(&SmallMat::identity(n)).max_abs();
    if defect > IDENTITY_TOL {
        return Err(GeomError::Precondition(format!(
            "metric differs from the identity by {defect:.3e}; normalize the frame first"
        )));
    }
    let mut q = Array3::zeros((n, n, n));
    for r in 0..n {
        q[[r, r, r]] = jet.dg[[r, r, r]];
        for m in 0..n {
            if m == r {
                continue;
            }
            let c = match variant {
                Variant::Primary => jet.dg[[r, r, m]],
                Variant::Alternate => jet.dg[[m, r, r]],
            };
            q[[r, r, m]] = c;
            q[[r, m, r]] = c;
        }
    }
    Ok(QuadraticChange { linear: SmallMat::identity(n), quad: q })
}

/// Jet of the same metric in the coordinates w given by `change`.
///
/// g, its first partials and the mixed second partials are exact. The
/// holomorphic second partials would need the cubic part of the inverse
/// change and are dropped (`hdg = None`).
pub fn pullback_jet(jet: &ChartJet, change: &QuadraticChange) -> Result<ChartJet, GeomError> {
    let n = jet.dim();
    if change.dim() != n || change.quad.dim() != (n, n, n) {
        return Err(GeomError::Shape(format!(
            "jet has dimension {n}, change has dimension {}",
            change.dim()
        )));
    }
    let jm = change
        .linear
        .inverse()
        .map_err(|e| GeomError::Degenerate(format!("linear part: {e:?}")))?;
    let j = |a: usize, b: usize| jm[(a, b)];
    let jc = |a: usize, b: usize| jm[(a, b)].conj();

    // hz[[r, i, k]] = d^2 z_r / d w_i d w_k at the base point
    let mut tmp = Array3::<C64>::zeros((n, n, n));
    for s in 0..n {
        for i in 0..n {
            for k in 0..n {
                let mut acc = ZERO;
                for a in 0..n {
                    for b in 0..n {
                        acc += change.quad[[s, a, b]] * j(a, i) * j(b, k);
                    }
                }
                tmp[[s, i, k]] = acc;
            }
        }
    }
    let hz = Array3::from_shape_fn((n, n, n), |(r, i, k)| {
        let mut acc = ZERO;
        for s in 0..n {
            acc -= j(r, s) * tmp[[s, i, k]];
        }
        acc
    });

    let g = Array2::from_shape_fn((n, n), |(i, jj)| {
        let mut acc = ZERO;
        for r in 0..n {
            for s in 0..n {
                acc += jet.g[[r, s]] * j(r, i) * jc(s, jj);
            }
        }
        acc
    });

    // d g_{r\bar s} / d w_k
    let dgw = Array3::from_shape_fn((n, n, n), |(r, s, k)| {
        let mut acc = ZERO;
        for p in 0..n {
            acc += jet.dg[[r, s, p]] * j(p, k);
        }
        acc
    });
    let dg = Array3::from_shape_fn((n, n, n), |(i, jj, k)| {
        let mut acc = ZERO;
        for r in 0..n {
            for s in 0..n {
                acc += (dgw[[r, s, k]] * j(r, i) + jet.g[[r, s]] * hz[[r, i, k]]) * jc(s, jj);
            }
        }
        acc
    });

    // d^2 g_{r\bar s} / d w_k d\bar w_l
    let ddgw = Array4::from_shape_fn((n, n, n, n), |(r, s, k, l)| {
        let mut acc = ZERO;
        for p in 0..n {
            for q in 0..n {
                acc += jet.ddg[[r, s, p, q]] * j(p, k) * jc(q, l);
            }
        }
        acc
    });
    let ddg = Array4::from_shape_fn((n, n, n, n), |(i, jj, k, l)| {
        let mut acc = ZERO;
        for r in 0..n {
            for s in 0..n {
                // d g_{r\bar s} / d\bar w_l
                let dbar_l: C64 = (0..n).map(|q| jet.dbar(r, s, q) * jc(q, l)).sum();
                acc += ddgw[[r, s, k, l]] * j(r, i) * jc(s, jj)
                    + dgw[[r, s, k]] * j(r, i) * hz[[s, jj, l]].conj()
                    + dbar_l * hz[[r, i, k]] * jc(s, jj)
                    + jet.g[[r, s]] * hz[[r, i, k]] * hz[[s, jj, l]].conj();
            }
        }
        acc
    });
    ChartJet::new(g, dg, ddg, None)
}
