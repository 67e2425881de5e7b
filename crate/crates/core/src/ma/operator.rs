use std::sync::Arc;

use super::{MaError, MaProblem, ADMISSIBLE_TOL};
use crate::grid::{Form11Field, Grid, ScalarField, Stencil};
use crate::linalg::{pack_hermitian, SmallMat, MAX_N};

/// χ + ∂∂̄u at an interior point.
#[inline]
fn form_at(prob: &MaProblem, st: &Stencil, u: &[f64], idx: usize, m: &[usize]) -> SmallMat {
    prob.chi().at(idx).add(&st.hessian_at(u, idx, m))
}

/// det(χ + ∂∂̄u) - ψ(z, u) det g at interior points; zero on the boundary.
pub fn ma_residual(u: &ScalarField, prob: &MaProblem) -> ScalarField {
    let grid = prob.grid();
    let st = Stencil::new(grid);
    let uv = u.values();
    let vals = grid.par_map(|idx, m| {
        if grid.is_boundary_m(m) {
            return 0.0;
        }
        let d = form_at(prob, &st, uv, idx, m).det().re;
        d - prob.rhs().eval(idx, uv[idx]).0 * prob.det_g(idx)
    });
    ScalarField::new(grid.clone(), vals).unwrap_or_else(|_| ScalarField::constant(grid.clone(), f64::NAN))
}

/// Smallest eigenvalue of g^{-1}(χ + ∂∂̄u) over interior points, and where.
pub(crate) fn admissibility_with_index(u: &ScalarField, prob: &MaProblem) -> (bool, f64, usize) {
    let grid = prob.grid();
    let st = Stencil::new(grid);
    let uv = u.values();
    let g = prob.g();
    let identity = g.is_uniform() && g.at(0) == SmallMat::identity(g.n());
    let uniform = if g.is_uniform() && !identity { g.at(0).cholesky().ok().map(|l| l.lower_inverse()) } else { None };
    let lams = grid.par_map(|idx, m| {
        if grid.is_boundary_m(m) {
            return f64::INFINITY;
        }
        let f = form_at(prob, &st, uv, idx, m);
        if identity {
            f.hermitian_eigenvalues()[0]
        } else if let Some(li) = &uniform {
            li.mul(&f).mul(&li.adjoint()).hermitian_eigenvalues()[0]
        } else {
            SmallMat::generalized_min_eigenvalue(&f, &g.at(idx)).unwrap_or(f64::NAN)
        }
    });
    let mut best = (f64::INFINITY, 0usize);
    for (i, l) in lams.iter().enumerate() {
        if l.is_nan() {
            return (false, f64::NAN, i);
        }
        if *l < best.0 {
            best = (*l, i);
        }
    }
    (best.0 > ADMISSIBLE_TOL, best.0, best.1)
}

/// Whether χ + ∂∂̄u > 0 at every interior point, with the grid minimum of
/// the smallest generalized eigenvalue.
pub fn admissibility(u: &ScalarField, prob: &MaProblem) -> (bool, f64) {
    let (ok, lam, _) = admissibility_with_index(u, prob);
    (ok, lam)
}

/// log det(χ + ∂∂̄u) - log ψ(z, u) - log det g at interior points.
pub fn log_residual(u: &ScalarField, prob: &MaProblem) -> Result<ScalarField, MaError> {
    let grid = prob.grid();
    let st = Stencil::new(grid);
    let uv = u.values();
    // -∞ marks a non-admissible point, NaN a nonpositive right-hand side
    let vals: Vec<f64> = grid.par_map(|idx, m| {
        if grid.is_boundary_m(m) {
            return 0.0;
        }
        let f = form_at(prob, &st, uv, idx, m);
        let Ok(l) = f.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let mut logdet = 0.0;
        for i in 0..f.dim() {
            logdet += 2.0 * l[(i, i)].re.ln();
        }
        match prob.rhs().log_eval(idx, uv[idx]) {
            Some((lp, _)) => logdet - lp - prob.det_g(idx).ln(),
            None => f64::NAN,
        }
    });
    if let Some(idx) = vals.iter().position(|v| !v.is_finite()) {
        return Err(if vals[idx].is_nan() {
            MaError::NonPositiveRhs(idx)
        } else {
            MaError::NotAdmissible { lambda_min: f64::NAN, index: idx }
        });
    }
    Ok(ScalarField::new(grid.clone(), vals)?)
}

/// v ↦ tr((χ + ∂∂̄u)^{-1} ∂∂̄v) - (ψ_u / ψ) v on interior points. Rows of
/// boundary points act as the identity so that the operator is square on the
/// full grid with zero boundary values.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    grid: Arc<Grid>,
    stencil: Stencil,
    /// packed (χ + ∂∂̄u)^{-1}, n^2 reals per point
    inv: Vec<f64>,
    /// ψ_u / ψ per point, absent when ψ does not depend on u
    zeroth: Option<Vec<f64>>,
    boundary: Vec<bool>,
}

impl LinearizedOperator {
    /// Refuses non-admissible u and points where ψ(z, u) ≤ 0.
    pub fn new(u: &ScalarField, prob: &MaProblem) -> Result<Self, MaError> {
        let grid = prob.grid().clone();
        let st = Stencil::new(&grid);
        let n = grid.n();
        let uv = u.values();
        let boundary = grid.boundary_mask();
        let mut inv = vec![0.0; grid.len() * n * n];
        grid.par_fill(&mut inv, n * n, |idx, m, slot| {
            if grid.is_boundary_m(m) {
                return;
            }
            let f = form_at(prob, &st, uv, idx, m);
            match (f.cholesky(), f.inverse()) {
                (Ok(_), Ok(fi)) => pack_hermitian(&fi, slot),
                _ => slot[0] = f64::NAN,
            }
        });
        if let Some(idx) = (0..grid.len()).find(|&i| inv[i * n * n].is_nan()) {
            let mut m = vec![0; grid.axes().len()];
            grid.multi_index(idx, &mut m);
            let f = form_at(prob, &st, uv, idx, &m);
            let lam = SmallMat::generalized_min_eigenvalue(&f, &prob.g().at(idx)).unwrap_or(f64::NAN);
            return Err(MaError::NotAdmissible { lambda_min: lam, index: idx });
        }
        let zeroth = if prob.rhs().psi.u_independent() {
            for (idx, b) in boundary.iter().enumerate() {
                if !*b && prob.rhs().eval(idx, uv[idx]).0 <= 0.0 {
                    return Err(MaError::NonPositiveRhs(idx));
                }
            }
            None
        } else {
            let z: Vec<Option<f64>> = (0..grid.len())
                .map(|idx| if boundary[idx] { Some(0.0) } else { prob.rhs().log_eval(idx, uv[idx]).map(|p| p.1) })
                .collect();
            if let Some(i) = z.iter().position(Option::is_none) {
                return Err(MaError::NonPositiveRhs(i));
            }
            Some(z.into_iter().map(Option::unwrap).collect())
        };
        Ok(LinearizedOperator { grid, stencil: st, inv, zeroth, boundary })
    }

    /// The Chern Laplacian v ↦ g^{i\bar j} v_{i\bar j} with identity rows on the boundary.
    pub fn laplacian(g: &Form11Field) -> Result<Self, MaError> {
        let grid = g.grid().clone();
        let n = grid.n();
        let mut inv = vec![0.0; grid.len() * n * n];
        let mut bad = None;
        for idx in 0..grid.len() {
            match g.at(idx).inverse() {
                Ok(gi) => pack_hermitian(&gi, &mut inv[idx * n * n..(idx + 1) * n * n]),
                Err(_) => {
                    bad = Some(idx);
                    break;
                }
            }
        }
        if let Some(i) = bad {
            return Err(MaError::DegenerateMetric(i));
        }
        Ok(LinearizedOperator { stencil: Stencil::new(&grid), boundary: grid.boundary_mask(), grid, inv, zeroth: None })
    }

    /// Whether the operator has a zeroth-order term.
    pub fn has_zeroth_order(&self) -> bool {
        self.zeroth.as_ref().is_some_and(|z| z.iter().any(|v| *v != 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Real coefficients c_ab of the second differences D_ab (a ≤ b) at a point.
    #[inline]
    fn coefficients(&self, idx: usize) -> [[f64; 2 * MAX_N]; 2 * MAX_N] {
        let n = self.grid.n();
        let w = n * n;
        let p = &self.inv[idx * w..(idx + 1) * w];
        let mut c = [[0.0; 2 * MAX_N]; 2 * MAX_N];
        for i in 0..n {
            c[2 * i][2 * i] = 0.25 * p[i];
            c[2 * i + 1][2 * i + 1] = 0.25 * p[i];
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                let (re, im) = (p[k], p[k + 1]);
                k += 2;
                c[2 * i][2 * j] = 0.5 * re;
                c[2 * i + 1][2 * j + 1] = 0.5 * re;
                c[2 * i][2 * j + 1] = 0.5 * im;
                c[2 * i + 1][2 * j] = -0.5 * im;
            }
        }
        c
    }

    #[inline]
    fn zeroth_at(&self, idx: usize) -> f64 {
        self.zeroth.as_ref().map_or(0.0, |z| z[idx])
    }

    /// y = L x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let active = self.stencil.active_axes().to_vec();
        self.grid.par_fill(y, 1, |idx, m, out| {
            if self.boundary[idx] {
                out[0] = x[idx];
                return;
            }
            let r = self.stencil.second_differences(x, idx, m);
            let c = self.coefficients(idx);
            let mut s = 0.0;
            for (ia, &a) in active.iter().enumerate() {
                s += c[a][a] * r[a][a];
                for &b in &active[ia + 1..] {
                    s += c[a][b] * r[a][b];
                }
            }
            out[0] = s - self.zeroth_at(idx) * x[idx];
        });
    }

    /// Grid averages of the diagonal coefficients per axis and of the
    /// zeroth-order coefficient (ψ_u/ψ), over interior points.
    pub fn mean_coefficients(&self) -> (Vec<f64>, f64) {
        let d = self.grid.axes().len();
        let mut diag = vec![0.0; d];
        let mut z = 0.0;
        let mut count = 0usize;
        for idx in 0..self.grid.len() {
            if self.boundary[idx] {
                continue;
            }
            let c = self.coefficients(idx);
            for a in 0..d {
                diag[a] += c[a][a];
            }
            z += self.zeroth_at(idx);
            count += 1;
        }
        let k = count.max(1) as f64;
        (diag.into_iter().map(|v| v / k).collect(), z / k)
    }

    /// Interior point numbering for assembled systems (`None` on the boundary).
    pub fn numbering(&self) -> (Vec<Option<usize>>, usize) {
        let mut next = 0;
        let num = self
            .boundary
            .iter()
            .map(|b| {
                if *b {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        (num, next)
    }

    /// Sparse entries (row, col, value) over interior unknowns.
    pub fn triplets(&self, numbering: &[Option<usize>]) -> Vec<(usize, usize, f64)> {
        let active = self.stencil.active_axes().to_vec();
        let d = self.grid.axes().len();
        let mut out = Vec::new();
        let mut m = vec![0usize; d];
        for idx in 0..self.grid.len() {
            let Some(row) = numbering[idx] else { continue };
            self.grid.multi_index(idx, &mut m);
            let c = self.coefficients(idx);
            let mut push = |off: isize, v: f64| {
                let j = (idx as isize + off) as usize;
                if let Some(col) = numbering[j] {
                    out.push((row, col, v));
                }
            };
            let mut center = -self.zeroth_at(idx);
            for (ia, &a) in active.iter().enumerate() {
                let h = self.stencil.h(a);
                let p = self.stencil.offset(a, m[a], 1);
                let q = self.stencil.offset(a, m[a], -1);
                let w = c[a][a] / (h * h);
                center -= 2.0 * w;
                push(p, w);
                push(q, w);
                for &b in &active[ia + 1..] {
                    let cab = c[a][b];
                    if cab == 0.0 {
                        continue;
                    }
                    let w = cab / (4.0 * h * self.stencil.h(b));
                    let bp = self.stencil.offset(b, m[b], 1);
                    let bq = self.stencil.offset(b, m[b], -1);
                    push(p + bp, w);
                    push(p + bq, -w);
                    push(q + bp, -w);
                    push(q + bq, w);
                }
            }
            push(0, center);
        }
        out
    }
}

/// ½(log det A + log det B) - log det((A + B)/2); nonpositive for positive
/// definite A, B by concavity of log det.
pub fn concavity_defect(a: &SmallMat, b: &SmallMat) -> f64 {
    let ld = |m: &SmallMat| m.det().re.ln();
    0.5 * (ld(a) + ld(b)) - ld(&a.add(b).scale(0.5))
}

/// (Σ 1/λ_i)^{n-1} - Σ λ_i / Π λ_i for the eigenvalues λ of g^{-1}𝔤, i.e. the
/// inequality (Σ 𝔤^{i\bar i})^{n-1} ≥ (tr χ + Δu) / det(χ + ∂∂̄u) in a frame
/// where g is the identity and 𝔤 is diagonal. Nonnegative for 𝔤 > 0.
pub fn yau_margin(g: &SmallMat, form: &SmallMat) -> Result<f64, MaError> {
    let n = g.dim();
    let l = g.cholesky().map_err(|_| MaError::DegenerateMetric(0))?;
    let li = l.lower_inverse();
    let c = li.mul(form).mul(&li.adjoint());
    let ev = c.hermitian_eigenvalues();
    let lam = &ev[..n];
    if lam[0] <= 0.0 {
        return Err(MaError::NotAdmissible { lambda_min: lam[0], index: 0 });
    }
    let inv_sum: f64 = lam.iter().map(|x| 1.0 / x).sum();
    let sum: f64 = lam.iter().sum();
    let prod: f64 = lam.iter().product();
    Ok(inv_sum.powi(n as i32 - 1) - sum / prod)
}
