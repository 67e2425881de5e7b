//! Commutation formulas for covariant derivatives of a scalar function, up to
//! third order, checked numerically at a point.
//!
//! Convention: `v_{ij} = ∇_j ∇_i v`, the last index being the most recent
//! differentiation, with `∇_{∂_k} ∂_i = Γ^l_{ki} ∂_l` and
//! `∇_{\bar∂_k} ∂_i = 0`.

use ndarray::{Array1, Array2, Array3, Array4};
use serde::Serialize;

use super::{christoffel, curvature, d_christoffel, holomorphic_curvature, torsion, ChartJet, GeomError, Poly};
use crate::linalg::C64;

/// Partial derivatives of a (possibly complex valued) function at a point.
#[derive(Debug, Clone)]
pub struct ScalarJet {
    /// d_i v
    pub d: Array1<C64>,
    /// \bar d_i v
    pub db: Array1<C64>,
    /// d_i d_j v
    pub dd: Array2<C64>,
    /// d_i \bar d_j v
    pub ddb: Array2<C64>,
    /// d_i d_j d_k v
    pub ddd: Array3<C64>,
    /// d_i d_j \bar d_k v
    pub dddb: Array3<C64>,
    /// d_i \bar d_j \bar d_k v
    pub ddbdb: Array3<C64>,
}

impl ScalarJet {
    pub fn from_poly(v: &Poly, z: &[C64]) -> Self {
        let n = z.len();
        ScalarJet {
            d: Array1::from_shape_fn(n, |i| v.dz(i).eval(z)),
            db: Array1::from_shape_fn(n, |i| v.dzbar(i).eval(z)),
            dd: Array2::from_shape_fn((n, n), |(i, j)| v.dz(i).dz(j).eval(z)),
            ddb: Array2::from_shape_fn((n, n), |(i, j)| v.dz(i).dzbar(j).eval(z)),
            ddd: Array3::from_shape_fn((n, n, n), |(i, j, k)| v.dz(i).dz(j).dz(k).eval(z)),
            dddb: Array3::from_shape_fn((n, n, n), |(i, j, k)| v.dz(i).dz(j).dzbar(k).eval(z)),
            ddbdb: Array3::from_shape_fn((n, n, n), |(i, j, k)| {
                v.dz(i).dzbar(j).dzbar(k).eval(z)
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }
}

/// Max-norm defects of each commutation identity.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CommutationDefects {
    /// v_{i\bar j} - v_{\bar j i}
    pub mixed_second: f64,
    /// v_{ij} - v_{ji} - T^l_{ij} v_l
    pub holomorphic_second: f64,
    /// v_{i\bar j\bar k} - v_{i\bar k\bar j} - conj(T^l_{jk}) v_{i\bar l}
    pub anti_third: f64,
    /// v_{i\bar jk} - v_{ik\bar j} + g^{l\bar m} R_{k\bar j i\bar m} v_l
    pub mixed_third: f64,
    /// v_{ijk} - v_{ikj} - g^{l\bar m} R_{jki\bar m} v_l - T^l_{jk} v_{il}
    pub holomorphic_third: f64,
    /// v_{i\bar jk} - v_{ki\bar j} + g^{l\bar m} R_{i\bar jk\bar m} v_l - T^l_{ik} v_{l\bar j}
    pub mixed_rotation: f64,
    /// v_{ijk} - v_{kij} - (curvature, torsion and ∇T terms)
    pub holomorphic_rotation: f64,
}

impl CommutationDefects {
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("mixed_second", self.mixed_second),
            ("holomorphic_second", self.holomorphic_second),
            ("anti_third", self.anti_third),
            ("mixed_third", self.mixed_third),
            ("holomorphic_third", self.holomorphic_third),
            ("mixed_rotation", self.mixed_rotation),
            ("holomorphic_rotation", self.holomorphic_rotation),
        ]
    }

    pub fn max(&self) -> f64 {
        self.entries().iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

/// Evaluates every commutation identity for `v` against the metric jet.
/// Needs the holomorphic second partials of the metric.
pub fn commutation_defects(jet: &ChartJet, v: &ScalarJet) -> Result<CommutationDefects, GeomError> {
    let n = jet.dim();
    if v.dim() != n {
        return Err(GeomError::Shape(format!("function jet has dimension {}", v.dim())));
    }
    let inv = jet.inverse_metric()?;
    let gam = christoffel(jet)?;
    let dgam = d_christoffel(jet)?;
    let dbgam = super::dbar_christoffel(jet)?;
    let t = torsion(jet)?;
    let r = curvature(jet)?;
    let rh = holomorphic_curvature(jet)?;

    // second order: s[i,j] = v_{ij}, m[i,j] = v_{i\bar j}
    let s = Array2::from_shape_fn((n, n), |(i, j)| {
        let mut a = v.dd[[j, i]];
        for l in 0..n {
            a -= gam[[l, j, i]] * v.d[l];
        }
        a
    });
    let m = v.ddb.clone();
    // v_{\bar j i}: the \bar j slot is untouched by ∇_{∂_i}
    let m_rev = Array2::from_shape_fn((n, n), |(i, j)| v.ddb[[i, j]]);

    // d_k s[i,j] and \bar d_k s[i,j]
    let ds = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut a = v.ddd[[k, j, i]];
        for l in 0..n {
            a -= dgam[[l, j, i, k]] * v.d[l] + gam[[l, j, i]] * v.dd[[k, l]];
        }
        a
    });
    let dbs = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut a = v.dddb[[j, i, k]];
        for l in 0..n {
            a -= dbgam[[l, j, i, k]] * v.d[l] + gam[[l, j, i]] * v.ddb[[l, k]];
        }
        a
    });

    // third order covariant derivatives
    let v_hhh = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut a = ds[[i, j, k]];
        for l in 0..n {
            a -= gam[[l, k, i]] * s[[l, j]] + gam[[l, k, j]] * s[[i, l]];
        }
        a
    });
    // v_{ij\bar k}
    let v_hha = &dbs;
    // v_{i\bar j k}
    let v_hah = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut a = v.dddb[[k, i, j]];
        for l in 0..n {
            a -= gam[[l, k, i]] * m[[l, j]];
        }
        a
    });
    // v_{i\bar j\bar k}
    let v_haa = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut a = v.ddbdb[[i, j, k]];
        for l in 0..n {
            a -= gam[[l, k, j]].conj() * m[[i, l]];
        }
        a
    });

    let mut out = CommutationDefects::default();
    let bump = |slot: &mut f64, z: C64| *slot = slot.max(z.norm());

    for i in 0..n {
        for j in 0..n {
            bump(&mut out.mixed_second, m[[i, j]] - m_rev[[i, j]]);
            let mut z = s[[i, j]] - s[[j, i]];
            for l in 0..n {
                z -= t[[l, i, j]] * v.d[l];
            }
            bump(&mut out.holomorphic_second, z);
        }
    }

    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut z = v_haa[[i, j, k]] - v_haa[[i, k, j]];
                for l in 0..n {
                    z -= t[[l, j, k]].conj() * m[[i, l]];
                }
                bump(&mut out.anti_third, z);

                let mut z = v_hah[[i, j, k]] - v_hha[[i, k, j]];
                for l in 0..n {
                    for mm in 0..n {
                        z += inv[[l, mm]] * r[[k, j, i, mm]] * v.d[l];
                    }
                }
                bump(&mut out.mixed_third, z);

                let mut z = v_hhh[[i, j, k]] - v_hhh[[i, k, j]];
                for l in 0..n {
                    for mm in 0..n {
                        z -= inv[[l, mm]] * rh[[j, k, i, mm]] * v.d[l];
                    }
                    z -= t[[l, j, k]] * s[[i, l]];
                }
                bump(&mut out.holomorphic_third, z);

                let mut z = v_hah[[i, j, k]] - v_hha[[k, i, j]];
                for l in 0..n {
                    for mm in 0..n {
                        z += inv[[l, mm]] * r[[i, j, k, mm]] * v.d[l];
                    }
                    z -= t[[l, i, k]] * m[[l, j]];
                }
                bump(&mut out.mixed_rotation, z);

                let mut z = v_hhh[[i, j, k]] - v_hhh[[k, i, j]];
                for l in 0..n {
                    for mm in 0..n {
                        z -= inv[[l, mm]] * rh[[j, k, i, mm]] * v.d[l];
                    }
                    z -= t[[l, j, k]] * s[[i, l]] + t[[l, i, k]] * s[[l, j]];
                    z -= nabla_torsion(&gam, &dgam, &t, l, i, k, j) * v.d[l];
                }
                bump(&mut out.holomorphic_rotation, z);
            }
        }
    }
    Ok(out)
}

/// ∇_j T^l_{ik}.
fn nabla_torsion(
    gam: &Array3<C64>,
    dgam: &Array4<C64>,
    t: &Array3<C64>,
    l: usize,
    i: usize,
    k: usize,
    j: usize,
) -> C64 {
    let n = gam.dim().0;
    let mut a = dgam[[l, i, k, j]] - dgam[[l, k, i, j]];
    for m in 0..n {
        a += gam[[l, j, m]] * t[[m, i, k]] - gam[[m, j, i]] * t[[l, m, k]] - gam[[m, j, k]] * t[[l, i, m]];
    }
    a
}
