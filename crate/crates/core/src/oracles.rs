//! Reference solutions: explicit solutions of the homogeneous equation,
//! radial determinants and manufactured problems. Determinants here are
//! expanded over permutations and never go through the factorizations used
//! by the solver.

use std::sync::{Arc, OnceLock};

use serde::Serialize;
use thiserror::Error;

use crate::grid::{complex_hessian, Form11Field, Grid, GridError, ScalarField, Stencil};
use crate::linalg::{SmallMat, C64, MAX_N};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleReport {
    fn new(name: &str, defect: f64, tolerance: f64) -> Self {
        OracleReport { name: name.into(), defect, tolerance, passed: defect <= tolerance }
    }
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        if left.is_empty() {
            let mut inv = 0;
            for i in 0..prefix.len() {
                for j in i + 1..prefix.len() {
                    if prefix[i] > prefix[j] {
                        inv += 1;
                    }
                }
            }
            out.push((prefix.clone(), if inv % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for k in 0..left.len() {
            let v = left.remove(k);
            prefix.push(v);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(k, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

fn permutation_table(n: usize) -> &'static [(Vec<usize>, f64)] {
    static TABLES: OnceLock<Vec<Vec<(Vec<usize>, f64)>>> = OnceLock::new();
    &TABLES.get_or_init(|| (0..=MAX_N).map(permutations).collect())[n]
}

/// det by the Leibniz expansion.
pub fn leibniz_det(m: &SmallMat) -> C64 {
    permutation_table(m.dim())
        .iter()
        .map(|(p, s)| p.iter().enumerate().fold(C64::new(*s, 0.0), |acc, (i, &j)| acc * m[(i, j)]))
        .sum()
}

/// Positive definiteness through leading principal minors.
fn sylvester_positive(m: &SmallMat) -> bool {
    (1..=m.dim()).all(|k| leibniz_det(&SmallMat::from_fn(k, |i, j| m[(i, j)])).re > 0.0)
}

/// sup over interior points of |det ∂∂̄|Im z|| on a box that stays at
/// least `safety` grid spacings away from ℝⁿ.
pub fn im_abs_check(grid: &Arc<Grid>, safety: f64, tolerance: f64) -> Result<OracleReport, OracleError> {
    if !grid.has_boundary() {
        return Err(OracleError::Precondition("expects a box grid".into()));
    }
    if safety < 3.0 {
        return Err(OracleError::Precondition(format!("safety factor {safety} < 3")));
    }
    let n = grid.n();
    let h = grid.axes().iter().filter(|a| a.active()).map(|a| a.h()).fold(0.0, f64::max);
    let im = |x: &[f64]| (0..n).map(|k| x[2 * k + 1] * x[2 * k + 1]).sum::<f64>().sqrt();
    let closest = (0..grid.len()).map(|i| im(&grid.coords(i))).fold(f64::INFINITY, f64::min);
    if closest < safety * h {
        return Err(OracleError::Precondition(format!(
            "box comes within {closest:.3e} of ℝⁿ, below {safety} h = {:.3e}",
            safety * h
        )));
    }
    let u = ScalarField::from_fn(grid.clone(), im)?;
    let hess = complex_hessian(&u);
    let defect = (0..grid.len())
        .filter(|&i| !grid.is_boundary(i))
        .map(|i| leibniz_det(&hess.at(i)).norm())
        .fold(0.0, f64::max);
    Ok(OracleReport::new("im_abs", defect, tolerance))
}

/// Point of the quadric z₁² + z₂² = 1 at ζ: (cos ζ, sin ζ).
pub fn quadric_point(zeta: C64) -> [C64; 2] {
    [zeta.cos(), zeta.sin()]
}

/// cosh⁻¹|z|² at the quadric point of ζ.
pub fn quadric_potential(zeta: C64) -> f64 {
    let [a, b] = quadric_point(zeta);
    (a.norm_sqr() + b.norm_sqr()).max(1.0).acosh()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadricReport {
    /// sup |cosh⁻¹|z|² - 2 Im ζ|
    pub pullback: OracleReport,
    /// sup of the discrete ζ-Laplacian of the pullback
    pub harmonicity: OracleReport,
}

/// Pulls cosh⁻¹|z|² back to the (Re ζ, Im ζ) box `grid` (n = 1) lying in
/// Im ζ > 0, where it equals 2 Im ζ and is harmonic.
pub fn quadric_pullback_check(grid: &Arc<Grid>) -> Result<QuadricReport, OracleError> {
    if grid.n() != 1 {
        return Err(OracleError::Precondition("the quadric is parametrized by one complex variable".into()));
    }
    let lo = grid.axes()[1].lo;
    if !(lo > 0.0) || !grid.has_boundary() {
        return Err(OracleError::Precondition("grid must be a box inside Im ζ > 0".into()));
    }
    let u = ScalarField::from_fn(grid.clone(), |x| quadric_potential(C64::new(x[0], x[1])))?;
    let pullback = (0..grid.len())
        .map(|i| (u.values()[i] - 2.0 * grid.coords(i)[1]).abs())
        .fold(0.0, f64::max);
    let st = Stencil::new(grid);
    let lap = grid
        .par_map(|idx, m| {
            if grid.is_boundary_m(m) {
                return 0.0;
            }
            let r = st.second_differences(u.values(), idx, m);
            (r[0][0] + r[1][1]).abs()
        })
        .into_iter()
        .fold(0.0, f64::max);
    Ok(QuadricReport {
        pullback: OracleReport::new("quadric_pullback", pullback, 1e-12),
        harmonicity: OracleReport::new("quadric_harmonicity", lap, 1e-10),
    })
}

/// A radial profile f(s), s = |z|², with exact first and second derivatives.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub df: fn(f64) -> f64,
    pub ddf: fn(f64) -> f64,
}

impl RadialProfile {
    pub fn linear() -> Self {
        RadialProfile { name: "s", f: |s| s, df: |_| 1.0, ddf: |_| 0.0 }
    }
    pub fn quadratic() -> Self {
        RadialProfile { name: "s + s^2/4", f: |s| s + 0.25 * s * s, df: |s| 1.0 + 0.5 * s, ddf: |_| 0.5 }
    }
    pub fn log() -> Self {
        RadialProfile {
            name: "log(1 + s)",
            f: |s| (1.0 + s).ln(),
            df: |s| 1.0 / (1.0 + s),
            ddf: |s| -1.0 / ((1.0 + s) * (1.0 + s)),
        }
    }

    /// (f')^{n-1} (f' + s f'').
    pub fn det(&self, n: usize, s: f64) -> f64 {
        let d = (self.df)(s);
        d.powi(n as i32 - 1) * (d + s * (self.ddf)(s))
    }

    /// u_{i\bar j} = f' δ_ij + f'' \bar z_i z_j.
    pub fn hessian(&self, z: &[C64]) -> SmallMat {
        let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        let (d, dd) = ((self.df)(s), (self.ddf)(s));
        SmallMat::from_fn(z.len(), |i, j| {
            let delta = if i == j { d } else { 0.0 };
            C64::new(delta, 0.0) + z[i].conj() * z[j] * dd
        })
    }
}

/// Largest disagreement between the closed-form radial determinant and the
/// permutation expansion of the exact Hessian at the given points.
pub fn radial_identity_defect(profile: &RadialProfile, points: &[Vec<C64>]) -> f64 {
    points
        .iter()
        .map(|z| {
            let s: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            (leibniz_det(&profile.hessian(z)).re - profile.det(z.len(), s)).abs()
        })
        .fold(0.0, f64::max)
}

/// sup over interior points of |det(discrete ∂∂̄ f(|z|²)) - (f')^{n-1}(f' + s f'')|.
pub fn radial_residual_check(
    profile: &RadialProfile,
    grid: &Arc<Grid>,
    tolerance: f64,
) -> Result<OracleReport, OracleError> {
    let n = grid.n();
    for i in 0..grid.len() {
        let s: f64 = grid.point_z(i).iter().map(|v| v.norm_sqr()).sum();
        let d = (profile.df)(s);
        if !(d > 0.0 && d + s * (profile.ddf)(s) > 0.0) {
            return Err(OracleError::Precondition(format!("profile {} is not admissible at s = {s}", profile.name)));
        }
    }
    let u = ScalarField::from_fn(grid.clone(), |x| (profile.f)(x.iter().map(|v| v * v).sum()))?;
    let hess = complex_hessian(&u);
    let defect = (0..grid.len())
        .filter(|&i| !grid.is_boundary(i))
        .map(|i| {
            let s: f64 = grid.coords(i).iter().map(|v| v * v).sum();
            (leibniz_det(&hess.at(i)).re - profile.det(n, s)).abs()
        })
        .fold(0.0, f64::max);
    Ok(OracleReport::new("radial", defect, tolerance))
}

/// A problem whose solution is known: ψ* = det(χ + ∂∂̄u*) / det g.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub u_star: ScalarField,
    pub psi_star: ScalarField,
    /// u* on boundary points (box grids)
    pub boundary: Option<ScalarField>,
}

fn finish_case(
    u_star: ScalarField,
    forms: impl Fn(usize) -> SmallMat + Sync,
    g: &Form11Field,
) -> Result<ManufacturedCase, OracleError> {
    let grid = u_star.grid().clone();
    let vals = grid.par_map(|idx, m| {
        if grid.is_boundary_m(m) {
            return Ok(1.0);
        }
        let f = forms(idx);
        if !sylvester_positive(&f) {
            return Err(idx);
        }
        Ok(leibniz_det(&f).re / leibniz_det(&g.at(idx)).re)
    });
    let psi = vals
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|i| OracleError::Precondition(format!("u* is not admissible at point {i}")))?;
    let psi_star = ScalarField::new(grid.clone(), psi)?;
    let boundary = grid.has_boundary().then(|| u_star.clone());
    Ok(ManufacturedCase { u_star, psi_star, boundary })
}

/// ψ* from the discrete Hessian of u*, so that u* solves the discrete
/// equation exactly.
pub fn make_manufactured(
    u_star: &ScalarField,
    g: &Form11Field,
    chi: &Form11Field,
) -> Result<ManufacturedCase, OracleError> {
    let hess = complex_hessian(u_star);
    finish_case(u_star.clone(), |i| chi.at(i).add(&hess.at(i)), g)
}

/// ψ* from the exact Hessian of u*, given as the real 2n×2n Hessian in
/// the coordinates x₁, y₁, x₂, ...; the discrete solution then differs from
/// u* by the truncation error.
pub fn make_manufactured_analytic(
    grid: &Arc<Grid>,
    g: &Form11Field,
    chi: &Form11Field,
    u: impl Fn(&[f64]) -> f64 + Sync,
    real_hessian: impl Fn(&[f64]) -> Vec<f64> + Sync,
) -> Result<ManufacturedCase, OracleError> {
    let n = grid.n();
    let u_star = ScalarField::from_fn(grid.clone(), u)?;
    finish_case(
        u_star,
        |i| {
            let x = grid.coords(i);
            let r = real_hessian(&x);
            let d = 2 * n;
            let h = SmallMat::from_fn(n, |a, b| {
                let rr = |p: usize, q: usize| r[p * d + q];
                C64::new(
                    0.25 * (rr(2 * a, 2 * b) + rr(2 * a + 1, 2 * b + 1)),
                    0.25 * (rr(2 * a, 2 * b + 1) - rr(2 * a + 1, 2 * b)),
                )
            });
            chi.at(i).add(&h)
        },
        g,
    )
}

/// w = -(Σ_k q_k^{-2})^{-1/2} with q_k = (x_k - a_k)(b_k - x_k)/L_k² over the
/// Dirichlet axes: convex, negative inside the box and zero on its boundary.
pub fn boundary_bump(grid: &Arc<Grid>) -> ScalarField {
    let axes: Vec<(usize, f64, f64)> = grid
        .axes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == crate::grid::AxisKind::Dirichlet)
        .map(|(k, a)| (k, a.lo, a.hi))
        .collect();
    let vals = (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                return 0.0;
            }
            let x = grid.coords(i);
            let s: f64 = axes
                .iter()
                .map(|&(k, a, b)| {
                    let q = (x[k] - a) * (b - x[k]) / ((b - a) * (b - a));
                    q.powi(-2)
                })
                .sum();
            -s.powf(-0.5)
        })
        .collect();
    ScalarField::new(grid.clone(), vals).expect("finite bump")
}

/// Dirichlet problem for a manufactured case on a box with the strict
/// subsolution u* + δ w, w from [`boundary_bump`], using the first δ in
/// `deltas` that the subsolution check accepts.
pub fn manufactured_box_problem(
    case: &ManufacturedCase,
    g: &Form11Field,
    chi: &Form11Field,
    deltas: &[f64],
) -> Result<(crate::ma::MaProblem, f64), OracleError> {
    use crate::ma::{MaProblem, RhsSpec};
    let grid = case.u_star.grid().clone();
    let boundary = case
        .boundary
        .clone()
        .ok_or_else(|| OracleError::Precondition("the case has no boundary data".into()))?;
    let w = boundary_bump(&grid);
    let mut last = String::new();
    for &delta in deltas {
        let sub: Vec<f64> = case.u_star.values().iter().zip(w.values()).map(|(u, w)| u + delta * w).collect();
        let sub = ScalarField::new(grid.clone(), sub)?;
        match MaProblem::dirichlet(
            g.clone(),
            chi.clone(),
            RhsSpec::field(case.psi_star.values().to_vec()),
            boundary.clone(),
            Some(sub),
        ) {
            Ok(p) => return Ok((p, delta)),
            Err(e) => last = e.to_string(),
        }
    }
    Err(OracleError::Precondition(format!("no strict subsolution among the trial δ: {last}")))
}

/// Degenerate problem det ∂∂̄u = 0 on an n = 1 box with boundary data φ,
/// where the solution is the harmonic extension H of φ. Returns the problem,
/// carrying the subsolution ū = H - k v with ∂∂̄v = -1 and v = 0 on the
/// boundary, together with H.
pub fn laplace_box_problem(
    phi: &ScalarField,
    k: f64,
) -> Result<(crate::ma::MaProblem, ScalarField), OracleError> {
    use crate::ma::{MaProblem, RhsSpec};
    use crate::solver::{harmonic_barrier, NewtonConfig};
    let grid = phi.grid().clone();
    if grid.n() != 1 || !grid.has_boundary() {
        return Err(OracleError::Precondition("needs an n = 1 box".into()));
    }
    if !(k > 0.0) {
        return Err(OracleError::Precondition(format!("k = {k} must be positive")));
    }
    let id = Form11Field::identity(grid.clone());
    let zero = Form11Field::zeros(grid.clone());
    let cfg = NewtonConfig::default();
    let flat = MaProblem::dirichlet(id.clone(), zero.clone(), RhsSpec::constant(0.0), phi.clone(), None)
        .map_err(crate::solver::SolverError::from)?;
    let h = harmonic_barrier(&flat, &cfg)?;
    let bump = MaProblem::dirichlet(
        id.clone(),
        id.clone(),
        RhsSpec::constant(0.0),
        ScalarField::zeros(grid.clone()),
        None,
    )
    .map_err(crate::solver::SolverError::from)?;
    let v = harmonic_barrier(&bump, &cfg)?;
    let mut sub: Vec<f64> = h.values().iter().zip(v.values()).map(|(a, b)| a - k * b).collect();
    for i in (0..grid.len()).filter(|&i| grid.is_boundary(i)) {
        sub[i] = phi.values()[i];
    }
    let sub = ScalarField::new(grid.clone(), sub)?;
    let prob = MaProblem::dirichlet(id, zero, RhsSpec::constant(0.0), phi.clone(), Some(sub))
        .map_err(crate::solver::SolverError::from)?;
    Ok((prob, h))
}

/// u* = a sin x₁ cos y_n with g = identity, ψ* from the exact Hessian.
pub fn sine_manufactured(grid: &Arc<Grid>, chi: &Form11Field, a: f64) -> Result<ManufacturedCase, OracleError> {
    let id = Form11Field::identity(grid.clone());
    let d = 2 * grid.n();
    let last = d - 1;
    make_manufactured_analytic(
        grid,
        &id,
        chi,
        |x| a * x[0].sin() * x[last].cos(),
        |x| {
            let mut h = vec![0.0; d * d];
            let v = -a * x[0].sin() * x[last].cos();
            let c = -a * x[0].cos() * x[last].sin();
            h[0] = v;
            h[last * d + last] = v;
            h[last] = c;
            h[last * d] = c;
            h
        },
    )
}
