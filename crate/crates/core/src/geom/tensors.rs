//! Chern connection quantities at a point, evaluated from a [`ChartJet`].
//!
//! Index layout follows the formulas directly: `gamma[[l, j, k]] = Γ^l_{jk}`,
//! `torsion[[k, i, j]] = T^k_{ij}`, `curv[[i, j, k, l]] = R_{i\bar j k\bar l}`.

use ndarray::{Array2, Array3, Array4};

use super::{ChartJet, GeomError};
use crate::linalg::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Γ^l_{jk} = g^{l\bar m} d g_{k\bar m} / d z_j.
pub fn christoffel(jet: &ChartJet) -> Result<Array3<C64>, GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let mut out = Array3::zeros((n, n, n));
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = ZERO;
                for m in 0..n {
                    s += inv[[l, m]] * jet.dg[[k, m, j]];
                }
                out[[l, j, k]] = s;
            }
        }
    }
    Ok(out)
}

/// T^k_{ij} = g^{k\bar l}(g_{j\bar l, i} - g_{i\bar l, j}); antisymmetric in
/// (i, j) by construction.
pub fn torsion(jet: &ChartJet) -> Result<Array3<C64>, GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let mut out = Array3::zeros((n, n, n));
    for k in 0..n {
        for i in 0..n {
            for j in i + 1..n {
                let mut s = ZERO;
                for l in 0..n {
                    s += inv[[k, l]] * (jet.dg[[j, l, i]] - jet.dg[[i, l, j]]);
                }
                out[[k, i, j]] = s;
                out[[k, j, i]] = -s;
            }
        }
    }
    Ok(out)
}

/// R_{i\bar j k\bar l} = -g_{k\bar l, i\bar j} + g^{p\bar q} g_{k\bar q, i} g_{p\bar l, \bar j}.
pub fn curvature(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let mut out = Array4::zeros((n, n, n, n));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = -jet.ddg[[k, l, i, j]];
                    for p in 0..n {
                        for q in 0..n {
                            s += inv[[p, q]] * jet.dg[[k, q, i]] * jet.dbar(p, l, j);
                        }
                    }
                    out[[i, j, k, l]] = s;
                }
            }
        }
    }
    Ok(out)
}

/// First and second Ricci traces: `R_{k\bar l} = g^{i\bar j} R_{i\bar j k\bar l}`
/// and `S_{i\bar j} = g^{k\bar l} R_{i\bar j k\bar l}`.
pub fn ricci_traces(jet: &ChartJet) -> Result<(Array2<C64>, Array2<C64>), GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let r = curvature(jet)?;
    let first = Array2::from_shape_fn((n, n), |(k, l)| {
        let mut s = ZERO;
        for i in 0..n {
            for j in 0..n {
                s += inv[[i, j]] * r[[i, j, k, l]];
            }
        }
        s
    });
    let second = Array2::from_shape_fn((n, n), |(i, j)| {
        let mut s = ZERO;
        for k in 0..n {
            for l in 0..n {
                s += inv[[k, l]] * r[[i, j, k, l]];
            }
        }
        s
    });
    Ok((first, second))
}

/// d g^{m\bar r} / d\bar z_j for all (m, r, j).
pub(crate) fn dbar_inverse(jet: &ChartJet, inv: &Array2<C64>) -> Array3<C64> {
    let n = jet.dim();
    Array3::from_shape_fn((n, n, n), |(m, r, j)| {
        let mut s = ZERO;
        for q in 0..n {
            for k in 0..n {
                s -= inv[[m, q]] * jet.dbar(k, q, j) * inv[[k, r]];
            }
        }
        s
    })
}

/// d g^{m\bar r} / d z_j for all (m, r, j).
pub(crate) fn d_inverse(jet: &ChartJet, inv: &Array2<C64>) -> Array3<C64> {
    let n = jet.dim();
    Array3::from_shape_fn((n, n, n), |(m, r, j)| {
        let mut s = ZERO;
        for q in 0..n {
            for k in 0..n {
                s -= inv[[m, q]] * jet.dg[[k, q, j]] * inv[[k, r]];
            }
        }
        s
    })
}

/// d Γ^l_{ki} / d\bar z_j, laid out as `[[l, k, i, j]]`; computed from the
/// jet directly rather than from the curvature formula.
pub fn dbar_christoffel(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let dinv = dbar_inverse(jet, &inv);
    Ok(Array4::from_shape_fn((n, n, n, n), |(l, k, i, j)| {
        let mut s = ZERO;
        for m in 0..n {
            s += dinv[[l, m, j]] * jet.dg[[i, m, k]] + inv[[l, m]] * jet.ddg[[i, m, k, j]];
        }
        s
    }))
}

/// d Γ^l_{ki} / d z_j, laid out as `[[l, k, i, j]]`. Needs the holomorphic
/// second partials of the jet.
pub fn d_christoffel(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let hdg = jet.hdg.as_ref().ok_or(GeomError::MissingHolomorphicPartials)?;
    let inv = jet.inverse_metric()?;
    let dinv = d_inverse(jet, &inv);
    Ok(Array4::from_shape_fn((n, n, n, n), |(l, k, i, j)| {
        let mut s = ZERO;
        for m in 0..n {
            s += dinv[[l, m, j]] * jet.dg[[i, m, k]] + inv[[l, m]] * hdg[[i, m, k, j]];
        }
        s
    }))
}

/// d T^m_{ki} / d\bar z_j as `[[m, k, i, j]]`, evaluated from the jet.
pub fn dbar_torsion(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let inv = jet.inverse_metric()?;
    let dinv = dbar_inverse(jet, &inv);
    Ok(Array4::from_shape_fn((n, n, n, n), |(m, k, i, j)| {
        let mut s = ZERO;
        for q in 0..n {
            let first = jet.dg[[i, q, k]] - jet.dg[[k, q, i]];
            let second = jet.ddg[[i, q, k, j]] - jet.ddg[[k, q, i, j]];
            s += dinv[[m, q, j]] * first + inv[[m, q]] * second;
        }
        s
    }))
}

/// R_{i\bar j k\bar l} - R_{k\bar j i\bar l} - g_{m\bar l} ∇_{\bar j} T^m_{ki}.
///
/// The difference vanishes identically, so the max norm of the returned
/// tensor is a consistency check of the whole kernel.
pub fn bianchi_defect(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let r = curvature(jet)?;
    let dt = dbar_torsion(jet)?;
    Ok(Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
        let mut s = r[[i, j, k, l]] - r[[k, j, i, l]];
        for m in 0..n {
            s -= jet.g[[m, l]] * dt[[m, k, i, j]];
        }
        s
    }))
}

/// (2,0) part of the curvature, R_{jki\bar m} = g(R(∂_j, ∂_k)∂_i, ∂_{\bar m}),
/// laid out as `[[j, k, i, m]]`. Zero for the Chern connection; computed
/// explicitly from derivatives of Γ.
pub fn holomorphic_curvature(jet: &ChartJet) -> Result<Array4<C64>, GeomError> {
    let n = jet.dim();
    let gamma = christoffel(jet)?;
    let dgam = d_christoffel(jet)?;
    Ok(Array4::from_shape_fn((n, n, n, n), |(j, k, i, m)| {
        let mut s = ZERO;
        for p in 0..n {
            // R(∂_j,∂_k)∂_i = (∂_jΓ^p_{ki} - ∂_kΓ^p_{ji} + Γ^q_{ki}Γ^p_{jq} - Γ^q_{ji}Γ^p_{kq}) ∂_p
            let mut comp = dgam[[p, k, i, j]] - dgam[[p, j, i, k]];
            for q in 0..n {
                comp += gamma[[q, k, i]] * gamma[[p, j, q]] - gamma[[q, j, i]] * gamma[[p, k, q]];
            }
            s += jet.g[[p, m]] * comp;
        }
        s
    }))
}

pub fn max_norm3(a: &Array3<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_norm4(a: &Array4<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest |R_{i\bar j k\bar l} - conj(R_{j\bar i l\bar k})|.
pub fn curvature_hermitian_defect(r: &Array4<C64>) -> f64 {
    let n = r.dim().0;
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    m = m.max((r[[i, j, k, l]] - r[[j, i, l, k]].conj()).norm());
                }
            }
        }
    }
    m
}

/// Largest |T^k_{ij} + T^k_{ji}|.
pub fn torsion_antisymmetry_defect(t: &Array3<C64>) -> f64 {
    let n = t.dim().0;
    let mut m = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                m = m.max((t[[k, i, j]] + t[[k, j, i]]).norm());
            }
        }
    }
    m
}
