//! Geodesics between two potentials on a flat torus M, as the homogeneous
//! equation (π*ω + ∂∂̄φ)^{n+1} = 0 on M × [0, 1] × S¹ with rotation
//! invariant φ(z, t).

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{complex_hessian, integrate, write_bin, Axis, Form11Field, Grid, GridError, ScalarField};
use crate::linalg::{SmallMat, C64};
use crate::ma::{admissibility, MaError, MaProblem, RhsSpec};
use crate::solver::{epsilon_sweep, ContinuationSchedule, SolveReport, SolverError};

const MAX_K: f64 = (1u64 << 20) as f64;

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ma(#[from] MaError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid geodesic problem: {0}")]
    Invalid(String),
    #[error("no subsolution constant up to K = 2^20; the endpoints are too wild")]
    EndpointsTooWild,
    #[error("slice t = {t} is not admissible")]
    SliceNotAdmissible { t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct GeodesicProblem {
    pub base: Arc<Grid>,
    pub phi0: ScalarField,
    pub phi1: ScalarField,
    /// intervals in t
    pub t_res: usize,
}

impl GeodesicProblem {
    pub fn new(phi0: ScalarField, phi1: ScalarField, t_res: usize) -> Result<Self, GeodesicError> {
        let base = phi0.grid().clone();
        if !base.is_torus() {
            return Err(GeodesicError::Invalid("the base must be a torus".into()));
        }
        if !phi0.same_grid(&phi1) {
            return Err(GeodesicError::Invalid("endpoints live on different grids".into()));
        }
        if base.n() + 1 > crate::linalg::MAX_N {
            return Err(GeodesicError::Invalid(format!("base dimension {} is too large", base.n())));
        }
        if t_res < 2 {
            return Err(GeodesicError::Invalid("need at least two intervals in t".into()));
        }
        let id = Form11Field::identity(base.clone());
        let flat = MaProblem::closed(id.clone(), id, RhsSpec::constant(1.0))?;
        for (name, phi) in [("φ₀", &phi0), ("φ₁", &phi1)] {
            let (ok, lam) = admissibility(phi, &flat);
            if !ok {
                return Err(GeodesicError::Invalid(format!("{name} is not admissible (λ_min = {lam:.3e})")));
            }
        }
        Ok(GeodesicProblem { base, phi0, phi1, t_res })
    }

    /// base × [0, 1] in t × a frozen rotation angle.
    pub fn product_grid(&self) -> Result<Arc<Grid>, GeodesicError> {
        let mut axes = self.base.axes().to_vec();
        axes.push(Axis::dirichlet(0.0, 1.0, self.t_res));
        axes.push(Axis::frozen(0.0));
        Ok(Arc::new(Grid::new(self.base.n() + 1, axes)?))
    }

    pub fn t_points(&self) -> usize {
        self.t_res + 1
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.t_res as f64
    }

    /// π*ω: the base metric with a zero dw dw̄ entry.
    fn chi(&self, grid: &Arc<Grid>) -> Result<Form11Field, GeodesicError> {
        let n = self.base.n();
        let d: Vec<f64> = (0..=n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        Ok(Form11Field::uniform(grid.clone(), SmallMat::diag(&d))?)
    }

    /// Assembles a product field from `f(base index, k)`.
    pub fn product_field(
        &self,
        grid: &Arc<Grid>,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<ScalarField, GeodesicError> {
        let nt = self.t_points();
        let vals = (0..grid.len()).map(|i| f(i / nt, i % nt)).collect();
        Ok(ScalarField::new(grid.clone(), vals)?)
    }

    /// Slice of a product field at t index `k`.
    pub fn slice(&self, phi: &ScalarField, k: usize) -> ScalarField {
        let nt = self.t_points();
        let vals = (0..self.base.len()).map(|b| phi.values()[b * nt + k]).collect();
        ScalarField::new(self.base.clone(), vals).expect("slice of a product field")
    }
}

#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub problem: MaProblem,
    pub subsolution: ScalarField,
    /// constant in ū = (1 - t) φ₀ + t φ₁ + K (t² - t)
    pub k: f64,
}

/// Lifts `gp` to the degenerate Dirichlet problem on the product grid with
/// the subsolution ū, doubling K from 1 until λ_min(π*ω + ∂∂̄ū) ≥ 1e-3 and
/// det(π*ω + ∂∂̄ū) ≥ 1 at every interior point.
pub fn lift_problem(gp: &GeodesicProblem) -> Result<LiftedProblem, GeodesicError> {
    let grid = gp.product_grid()?;
    let id = Form11Field::identity(grid.clone());
    let chi = gp.chi(&grid)?;
    let (p0, p1) = (gp.phi0.values(), gp.phi1.values());
    let mut k = 1.0;
    while k <= MAX_K {
        let sub = gp.product_field(&grid, |b, j| {
            let t = gp.t(j);
            (1.0 - t) * p0[b] + t * p1[b] + k * (t * t - t)
        })?;
        let hess = complex_hessian(&sub);
        let good = (0..grid.len()).filter(|&i| !grid.is_boundary(i)).all(|i| {
            let m = chi.at(i).add(&hess.at(i));
            m.hermitian_eigenvalues()[0] >= 1e-3 && m.det().re >= 1.0
        });
        if good {
            let problem = MaProblem::dirichlet(id, chi, RhsSpec::constant(0.0), sub.clone(), Some(sub.clone()))?;
            return Ok(LiftedProblem { problem, subsolution: sub, k });
        }
        k *= 2.0;
    }
    Err(GeodesicError::EndpointsTooWild)
}

/// Blocks of π*ω + ∂∂̄φ at a product point: base block A, column b and corner d.
fn blocks(m: &SmallMat) -> (SmallMat, Vec<C64>, f64) {
    let n = m.dim() - 1;
    let a = SmallMat::from_fn(n, |i, j| m[(i, j)]);
    let b = (0..n).map(|i| m[(i, n)]).collect();
    (a, b, m[(n, n)].re)
}

/// 4 (d - b* A⁻¹ b), or `None` when A is not positive definite.
fn schur(m: &SmallMat) -> Option<f64> {
    let (a, b, d) = blocks(m);
    let l = a.cholesky().ok()?;
    let li = l.lower_inverse();
    // |L⁻¹ b|² = b* A⁻¹ b
    let q: f64 = (0..b.len())
        .map(|i| (0..=i).map(|j| li[(i, j)] * b[j]).sum::<C64>().norm_sqr())
        .sum();
    Some(4.0 * (d - q))
}

#[derive(Debug, Clone)]
pub struct GeodesicResidual {
    /// φ̈ - g(φ)^{j\bar k} φ̇_j φ̇_{\bar k} at interior points, 0 elsewhere
    pub values: ScalarField,
    /// false where the slice metric ω + ∂∂̄φ(·, t) is not positive
    pub valid: Vec<bool>,
}

impl GeodesicResidual {
    pub fn sup(&self) -> f64 {
        self.values.values().iter().zip(&self.valid).filter(|(_, v)| **v).map(|(r, _)| r.abs()).fold(0.0, f64::max)
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|v| **v).count() as f64 / self.valid.len().max(1) as f64
    }
}

fn product_forms(phi: &ScalarField, gp: &GeodesicProblem) -> Result<(Arc<Grid>, Form11Field, Form11Field), GeodesicError> {
    let grid = gp.product_grid()?;
    if **phi.grid() != *grid {
        return Err(GeodesicError::Invalid("path does not live on the product grid".into()));
    }
    Ok((grid.clone(), gp.chi(&grid)?, complex_hessian(phi)))
}

/// Residual of the geodesic equation for the discrete path `phi`, given as
/// a field on the product grid.
pub fn geodesic_residual(phi: &ScalarField, gp: &GeodesicProblem) -> Result<GeodesicResidual, GeodesicError> {
    let (grid, chi, hess) = product_forms(phi, gp)?;
    let mut valid = vec![true; grid.len()];
    let mut vals = vec![0.0; grid.len()];
    for i in (0..grid.len()).filter(|&i| !grid.is_boundary(i)) {
        match schur(&chi.at(i).add(&hess.at(i))) {
            Some(r) => vals[i] = r,
            None => valid[i] = false,
        }
    }
    Ok(GeodesicResidual { values: ScalarField::new(grid, vals)?, valid })
}

/// sup over interior points with admissible slices of
/// |4 det(π*ω + ∂∂̄φ) / det A - residual|, the determinant expanded directly.
pub fn schur_defect(phi: &ScalarField, gp: &GeodesicProblem) -> Result<f64, GeodesicError> {
    let (grid, chi, hess) = product_forms(phi, gp)?;
    let res = geodesic_residual(phi, gp)?;
    let mut worst = 0.0f64;
    for i in (0..grid.len()).filter(|&i| !grid.is_boundary(i) && res.valid[i]) {
        let m = chi.at(i).add(&hess.at(i));
        let (a, _, _) = blocks(&m);
        let full = 4.0 * crate::oracles::leibniz_det(&m).re / crate::oracles::leibniz_det(&a).re;
        worst = worst.max((full - res.values.values()[i]).abs());
    }
    Ok(worst)
}

/// L(φ) = ∫₀¹ (∫_M φ̇² ω_φⁿ)^{1/2} dt by the midpoint rule in t.
pub fn path_length(phi: &ScalarField, gp: &GeodesicProblem) -> Result<f64, GeodesicError> {
    product_forms(phi, gp)?;
    let ht = 1.0 / gp.t_res as f64;
    let id = Form11Field::identity(gp.base.clone());
    let mut total = 0.0;
    for k in 0..gp.t_res {
        let (a, b) = (gp.slice(phi, k), gp.slice(phi, k + 1));
        let mid: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
        let mid = ScalarField::new(gp.base.clone(), mid)?;
        let hess = complex_hessian(&mid);
        let mut density = Vec::with_capacity(gp.base.len());
        for i in 0..gp.base.len() {
            let m = id.at(i).add(&hess.at(i));
            if m.cholesky().is_err() {
                return Err(GeodesicError::SliceNotAdmissible { t: (k as f64 + 0.5) * ht });
            }
            let dot = (b.values()[i] - a.values()[i]) / ht;
            density.push(dot * dot * m.det().re);
        }
        let e = integrate(&ScalarField::new(gp.base.clone(), density)?, &id)?;
        total += ht * e.sqrt();
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicStage {
    pub eps: f64,
    pub residual_sup: f64,
    pub valid_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    /// solution at the smallest ε
    pub path: ScalarField,
    /// Richardson extrapolation to ε = 0 over the last two stages
    pub extrapolated: Option<ScalarField>,
    pub subsolution: ScalarField,
    pub k: f64,
    pub stages: Vec<GeodesicStage>,
    pub report: SolveReport,
    pub length: Option<f64>,
}

/// Solves the lifted problem by an ε-sweep with ψ = 0. The ε-solutions are
/// extrapolated linearly in the floor level ε^{n+1}.
pub fn solve_geodesic(gp: &GeodesicProblem, sched: &ContinuationSchedule) -> Result<GeodesicSolution, GeodesicError> {
    let lifted = lift_problem(gp)?;
    let (sweep, report) = epsilon_sweep(&lifted.problem, sched)?;
    let last = sweep
        .last()
        .ok_or_else(|| GeodesicError::Solver(SolverError::Rejected(report.message.clone().unwrap_or_default())))?;
    let mut stages = Vec::with_capacity(sweep.len());
    for st in &sweep {
        let r = geodesic_residual(&st.u, gp)?;
        stages.push(GeodesicStage { eps: st.eps, residual_sup: r.sup(), valid_fraction: r.valid_fraction() });
    }
    let dim = gp.base.n() as i32 + 1;
    let extrapolated = if sweep.len() >= 2 {
        let (a, b) = (&sweep[sweep.len() - 2], last);
        let (e1, e2) = (a.eps.powi(dim), b.eps.powi(dim));
        let vals = a.u.values().iter().zip(b.u.values()).map(|(u1, u2)| (e1 * u2 - e2 * u1) / (e1 - e2)).collect();
        Some(ScalarField::new(last.u.grid().clone(), vals)?)
    } else {
        None
    };
    let length = path_length(&last.u, gp).ok();
    Ok(GeodesicSolution {
        path: last.u.clone(),
        extrapolated,
        subsolution: lifted.subsolution,
        k: lifted.k,
        stages,
        report,
        length,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    t: Vec<f64>,
    files: Vec<String>,
    extrapolated_files: Vec<String>,
    k: f64,
    stages: &'a [GeodesicStage],
    length: Option<f64>,
    converged: bool,
}

/// Writes one binary dump per t slice of the path (and of the extrapolated
/// path) into `dir`, plus `manifest.json`.
pub fn export(sol: &GeodesicSolution, gp: &GeodesicProblem, dir: impl AsRef<Path>) -> Result<(), GeodesicError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut extrapolated_files = Vec::new();
    for k in 0..gp.t_points() {
        let name = format!("phi_{k:04}.bin");
        write_bin(&gp.slice(&sol.path, k), dir.join(&name))?;
        files.push(name);
        if let Some(x) = &sol.extrapolated {
            let name = format!("phi_extrapolated_{k:04}.bin");
            write_bin(&gp.slice(x, k), dir.join(&name))?;
            extrapolated_files.push(name);
        }
    }
    let manifest = Manifest {
        t: (0..gp.t_points()).map(|k| gp.t(k)).collect(),
        files,
        extrapolated_files,
        k: sol.k,
        stages: &sol.stages,
        length: sol.length,
        converged: sol.report.converged,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}
