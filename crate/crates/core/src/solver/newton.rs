use serde::Serialize;

use super::{NewtonConfig, SolverError};
use crate::grid::{integrate, Form11Field, ScalarField};
use crate::linsolve::{self, dot};
use crate::ma::{admissibility, log_residual, LinearizedOperator, MaError, MaProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub linear_iterations: usize,
    /// sup-norm of the final log residual (minus the shift on closed grids)
    pub residual: f64,
    pub lambda_min: f64,
    pub min_accepted_lambda: f64,
    pub shift: f64,
    /// tolerance actually used: the configured one or the rounding floor of
    /// the discrete Hessian, whichever is larger
    pub effective_tol: f64,
    pub message: Option<String>,
}

/// ∫u ωⁿ / ∫ωⁿ with ω the background metric.
pub(crate) fn weighted_mean(u: &ScalarField, g: &Form11Field) -> f64 {
    let one = ScalarField::constant(u.grid().clone(), 1.0);
    integrate(u, g).unwrap_or(f64::NAN) / integrate(&one, g).unwrap_or(f64::NAN)
}

fn project_mean(u: &mut ScalarField, g: &Form11Field) {
    let m = weighted_mean(u, g);
    u.values_mut().iter_mut().for_each(|v| *v -= m);
}

/// Interior residual vector F - s (zero on the boundary) and its sup-norm.
fn shifted(f: &ScalarField, shift: f64, mask: &[bool]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = f.values().iter().zip(mask).map(|(v, m)| if *m { 0.0 } else { v - shift }).collect();
    let sup = r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    (r, sup)
}

/// Size of the rounding error in log det(χ + ∂∂̄u) coming from second
/// differences of u.
fn rounding_floor(u: &ScalarField, lambda_min: f64) -> f64 {
    let inv_h2: f64 = u.grid().axes().iter().filter(|a| a.active()).map(|a| a.h().powi(-2)).sum();
    16.0 * f64::EPSILON * (1.0 + u.max_abs()) * inv_h2 / lambda_min
}

/// Damped Newton for log det(χ + ∂∂̄u) - log ψ(z, u) - log det g = 0.
///
/// On closed grids with u-independent ψ the equation is solved up to an
/// additive constant s (returned as `shift`) with ∫u ωⁿ = 0 imposed after
/// every step. Backtracking keeps every accepted iterate admissible with
/// λ_min ≥ σ λ_min of the previous iterate. A failed line search or linear
/// solve returns the last iterate with `converged = false`.
pub fn newton_solve(
    prob: &MaProblem,
    u0: &ScalarField,
    cfg: &NewtonConfig,
) -> Result<(ScalarField, NewtonOutcome), SolverError> {
    let grid = prob.grid();
    if **u0.grid() != **grid {
        return Err(SolverError::Rejected("initial guess lives on a different grid".into()));
    }
    let mut u = u0.clone();
    prob.impose_boundary(&mut u);
    let bordered = !grid.has_boundary() && prob.rhs().psi.u_independent();
    if bordered {
        project_mean(&mut u, prob.g());
    }
    let (ok, mut lam) = admissibility(&u, prob);
    if !ok {
        return Err(MaError::NotAdmissible { lambda_min: lam, index: 0 }.into());
    }
    let mask = grid.boundary_mask();
    let (mut shift, mut r, mut sup) = {
        let f = log_residual(&u, prob)?;
        let shift = if bordered { f.mean() } else { 0.0 };
        let (r, sup) = shifted(&f, shift, &mask);
        (shift, r, sup)
    };
    let mut out = NewtonOutcome {
        converged: false,
        iterations: 0,
        linear_iterations: 0,
        residual: sup,
        lambda_min: lam,
        min_accepted_lambda: lam,
        shift,
        effective_tol: cfg.residual_tol,
        message: None,
    };
    loop {
        out.effective_tol = cfg.residual_tol.max(rounding_floor(&u, lam));
        if sup <= out.effective_tol {
            out.converged = true;
            break;
        }
        if out.iterations >= cfg.max_iter {
            out.message = Some(format!("no convergence in {} iterations", cfg.max_iter));
            break;
        }
        let op = LinearizedOperator::new(&u, prob)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let tol = (0.1 * sup).clamp(1e-12, cfg.linear_tol);
        let (v, ds, stats) = match linsolve::solve(&op, &rhs, bordered, cfg.method, tol, cfg.linear_max_iter) {
            Ok(x) => x,
            Err(e) => {
                out.message = Some(e.to_string());
                break;
            }
        };
        drop(op);
        out.linear_iterations += stats.iterations;
        let merit = dot(&r, &r).sqrt();
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= cfg.min_damping {
            let vals: Vec<f64> = u.values().iter().zip(&v).map(|(a, b)| a + alpha * b).collect();
            let mut trial = ScalarField::new(grid.clone(), vals)?;
            if bordered {
                project_mean(&mut trial, prob.g());
            }
            let (ok, lt) = admissibility(&trial, prob);
            if ok && lt >= cfg.sigma * lam {
                if let Ok(ft) = log_residual(&trial, prob) {
                    let st = shift + alpha * ds;
                    let (rt, supt) = shifted(&ft, st, &mask);
                    if dot(&rt, &rt).sqrt() <= (1.0 - 1e-4 * alpha) * merit {
                        accepted = Some((trial, st, rt, supt, lt));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, st, rt, supt, lt)) => {
                u = trial;
                shift = st;
                r = rt;
                sup = supt;
                lam = lt;
                out.iterations += 1;
                out.min_accepted_lambda = out.min_accepted_lambda.min(lam);
            }
            None => {
                out.message = Some(format!("step length fell below {}", cfg.min_damping));
                break;
            }
        }
    }
    out.residual = sup;
    out.lambda_min = lam;
    out.shift = shift;
    Ok((u, out))
}
