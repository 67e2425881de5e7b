use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::{corpus, cross_diagonal, random_hermitian, AnalyticMetric};
use super::{
    bianchi_defect, curvature, curvature_hermitian_defect, max_norm3, max_norm4, normalize_frame, pullback_jet,
    special_coordinates, torsion, torsion_antisymmetry_defect, ChartJet, GeomError, Variant,
};
use crate::linalg::{SmallMat, C64};

pub const BIANCHI_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const KAHLER_TORSION_TOL: f64 = 1e-12;
pub const SPECIAL_COORDINATES_TOL: f64 = 1e-10;

/// Worst defects of one metric over the sampled points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub name: String,
    pub kahler: bool,
    pub bianchi: f64,
    pub torsion_antisymmetry: f64,
    pub curvature_hermitian: f64,
    pub torsion_norm: f64,
    pub passed: bool,
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-r..r), rng.gen_range(-r..r))).collect()
}

pub fn identity_row(m: &dyn AnalyticMetric, points: &[Vec<C64>]) -> Result<IdentityRow, GeomError> {
    let mut row = IdentityRow {
        name: m.name().to_string(),
        kahler: m.is_kahler(),
        bianchi: 0.0,
        torsion_antisymmetry: 0.0,
        curvature_hermitian: 0.0,
        torsion_norm: 0.0,
        passed: false,
    };
    for z in points {
        let jet = m.jet(z)?;
        let t = torsion(&jet)?;
        row.torsion_antisymmetry = row.torsion_antisymmetry.max(torsion_antisymmetry_defect(&t));
        row.torsion_norm = row.torsion_norm.max(max_norm3(&t));
        row.curvature_hermitian = row.curvature_hermitian.max(curvature_hermitian_defect(&curvature(&jet)?));
        row.bianchi = row.bianchi.max(max_norm4(&bianchi_defect(&jet)?));
    }
    row.passed = row.bianchi <= BIANCHI_TOL
        && row.torsion_antisymmetry == 0.0
        && row.curvature_hermitian <= HERMITIAN_TOL
        && (!row.kahler || row.torsion_norm <= KAHLER_TORSION_TOL);
    Ok(row)
}

/// Identity defects for every metric of the built-in corpus at `points`
/// random points in the polydisc of radius 0.3.
pub fn identity_suite(points: usize, seed: u64) -> Result<Vec<IdentityRow>, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus()
        .iter()
        .map(|m| {
            let pts: Vec<_> = (0..points).map(|_| random_point(&mut rng, m.dim(), 0.3)).collect();
            identity_row(m.as_ref(), &pts)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecialCoordinatesReport {
    pub jets: usize,
    /// worst deviation from g = I, ∂_k g_{i\bar i} = 0, ∂_j g_{i\bar j} = T^i_{jj}
    pub primary: f64,
    /// worst deviation from g = I, ∂_j g_{i\bar j} = 0, ∂_k g_{i\bar i} = T^i_{ik}
    pub alternate: f64,
    pub passed: bool,
}

fn primary_defect(p: &ChartJet, t: &ndarray::Array3<C64>) -> f64 {
    let n = p.dim();
    let mut d = p.metric().sub(&SmallMat::identity(n)).max_abs();
    for i in 0..n {
        for k in 0..n {
            d = d.max(p.dg[[i, i, k]].norm());
        }
        for j in (0..n).filter(|&j| j != i) {
            d = d.max((p.dg[[i, j, j]] - t[[j, j, i]]).norm());
        }
    }
    d
}

fn alternate_defect(p: &ChartJet, t: &ndarray::Array3<C64>) -> f64 {
    let n = p.dim();
    let mut d = p.metric().sub(&SmallMat::identity(n)).max_abs();
    for i in 0..n {
        for j in 0..n {
            d = d.max(p.dg[[i, j, j]].norm());
        }
        for k in (0..n).filter(|&k| k != i) {
            d = d.max((p.dg[[i, i, k]] - t[[i, k, i]]).norm());
        }
    }
    d
}

/// Both special coordinate changes on `count` random normalized jets on C²,
/// checked through the exact pullback.
pub fn special_coordinates_suite(count: usize, seed: u64) -> Result<SpecialCoordinatesReport, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut primary, mut alternate) = (0.0f64, 0.0f64);
    for k in 0..count {
        let m = if k % 5 == 0 {
            cross_diagonal(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            random_hermitian(2, seed.wrapping_mul(1000).wrapping_add(k as u64))
        };
        let raw = m.jet(&random_point(&mut rng, 2, 0.3))?;
        let jet = pullback_jet(&raw, &normalize_frame(&raw)?)?;
        let t = torsion(&jet)?;
        let p = pullback_jet(&jet, &special_coordinates(&jet, Variant::Primary)?)?;
        primary = primary.max(primary_defect(&p, &t));
        let a = pullback_jet(&jet, &special_coordinates(&jet, Variant::Alternate)?)?;
        alternate = alternate.max(alternate_defect(&a, &t));
    }
    Ok(SpecialCoordinatesReport {
        jets: count,
        primary,
        alternate,
        passed: primary <= SPECIAL_COORDINATES_TOL && alternate <= SPECIAL_COORDINATES_TOL,
    })
}
