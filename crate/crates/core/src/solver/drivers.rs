use super::newton::weighted_mean;
use super::{
    estimate_monitor, newton_solve, ContinuationSchedule, NewtonConfig, NewtonOutcome, SolveReport, SolverError,
    StageReport,
};
use crate::grid::{integrate, ScalarField};
use crate::linsolve;
use crate::ma::{regularize, LinearizedOperator, MaProblem, RhsSpec};

const MAX_BISECTIONS: usize = 6;

fn stage_report(label: String, parameter: f64, out: &NewtonOutcome, u: &ScalarField, prob: &MaProblem) -> StageReport {
    StageReport {
        label,
        parameter,
        converged: out.converged,
        iterations: out.iterations,
        linear_iterations: out.linear_iterations,
        residual: out.residual,
        effective_tol: out.effective_tol,
        lambda_min: out.lambda_min,
        min_accepted_lambda: out.min_accepted_lambda,
        monitor: estimate_monitor(u, prob),
    }
}

/// Follows `problem_at(s)` along `steps`, warm-starting every stage and
/// bisecting a failed step up to six times.
fn follow_path(
    steps: &[f64],
    u0: ScalarField,
    cfg: &NewtonConfig,
    report: &mut SolveReport,
    problem_at: impl Fn(f64) -> Result<MaProblem, SolverError>,
) -> Result<ScalarField, SolverError> {
    let mut u = u0;
    let mut prev: Option<f64> = None;
    for &target in steps {
        let mut attempt = target;
        let mut bisections = 0;
        loop {
            let p = problem_at(attempt)?;
            let (un, out) = newton_solve(&p, &u, cfg)?;
            if !p.grid().has_boundary() && p.rhs().psi.u_independent() {
                report.shift = Some(out.shift);
            }
            report.final_residual = out.residual;
            if out.converged {
                report.stages.push(stage_report(format!("s={attempt}"), attempt, &out, &un, &p));
                u = un;
                prev = Some(attempt);
                if attempt == target {
                    break;
                }
                attempt = target;
                continue;
            }
            match prev {
                Some(ps) if bisections < MAX_BISECTIONS => {
                    attempt = 0.5 * (ps + attempt);
                    bisections += 1;
                }
                _ => {
                    report.stages.push(stage_report(format!("s={attempt}"), attempt, &out, &un, &p));
                    report.message = Some(format!(
                        "stage s = {attempt} failed: {}",
                        out.message.unwrap_or_else(|| "no convergence".into())
                    ));
                    return Ok(un);
                }
            }
        }
    }
    report.converged = true;
    Ok(u)
}

/// ψ(p, u(p)) det g(p) / det χ(p) at the first maximum point p of u; at most
/// one by the maximum principle.
pub fn max_principle_ratio(u: &ScalarField, prob: &MaProblem) -> f64 {
    let v = u.values();
    let p = (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best });
    prob.rhs().eval(p, v[p]).0 * prob.det_g(p) / prob.chi().at(p).det().re
}

/// Solves det(χ + ∂∂̄u) = ψ(z, u) det g on a closed grid through
/// ψ^s = (1 - s) e^u + s ψ, starting from u = 0 at s = 0.
pub fn continuation_solve(
    prob: &MaProblem,
    sched: &ContinuationSchedule,
) -> Result<(ScalarField, SolveReport), SolverError> {
    sched.validate()?;
    let grid = prob.grid();
    if grid.has_boundary() {
        return Err(SolverError::Rejected("continuation in s needs a grid without boundary".into()));
    }
    if !prob.rhs().flags.strict_monotone {
        return Err(SolverError::Rejected("continuation in s needs ψ_u > 0".into()));
    }
    prob.rhs().validate(grid.len(), &[-4.0, -1.0, 0.0, 1.0, 4.0])?;
    let mut report = SolveReport::new();
    let u = follow_path(&sched.s_steps, ScalarField::zeros(grid.clone()), &sched.newton, &mut report, |s| {
        Ok(prob.with_rhs(prob.rhs().blend(s))?)
    })?;
    report.shift = None;
    let ratio = max_principle_ratio(&u, prob);
    report.check("max_principle", ratio <= 1.0 + 1e-8, ratio);
    Ok((u, report))
}

/// Solves det(χ + ∂∂̄u) = c ψ det g with ∫u ωⁿ = 0 on a closed grid, for
/// u-independent ψ, where c = ∫χⁿ / ∫ψ ωⁿ is reported as `rescale`. The
/// path (1 - s) det χ / det g + s c ψ is only refined when the direct step fails.
pub fn torus_calabi_solve(
    prob: &MaProblem,
    sched: &ContinuationSchedule,
) -> Result<(ScalarField, SolveReport), SolverError> {
    sched.validate()?;
    let grid = prob.grid().clone();
    if grid.has_boundary() {
        return Err(SolverError::Rejected("the closed solve needs a grid without boundary".into()));
    }
    if !prob.rhs().psi.u_independent() {
        return Err(SolverError::Rejected("ψ must not depend on u".into()));
    }
    let psi: Vec<f64> = (0..grid.len()).map(|i| prob.rhs().eval(i, 0.0).0).collect();
    if psi.iter().any(|v| *v < 0.0) {
        return Err(SolverError::Rejected("ψ takes negative values".into()));
    }
    let one = ScalarField::constant(grid.clone(), 1.0);
    let vol_chi = integrate(&one, prob.chi())?;
    let int_psi = integrate(&ScalarField::new(grid.clone(), psi)?, prob.g())?;
    if !(vol_chi > 0.0) || !(int_psi > 0.0) || !(vol_chi / int_psi).is_finite() {
        return Err(SolverError::Rejected(format!(
            "compatibility cannot be restored by rescaling (∫χⁿ = {vol_chi:e}, ∫ψωⁿ = {int_psi:e})"
        )));
    }
    let c = vol_chi / int_psi;
    let start: Vec<f64> = (0..grid.len()).map(|i| prob.chi().at(i).det().re / prob.det_g(i)).collect();
    let mut report = SolveReport::new();
    report.rescale = Some(c);
    let compat = (c * int_psi - vol_chi).abs() / vol_chi;
    report.check("compatibility", compat <= 1e-6, compat);
    let mut u = follow_path(&[0.0, 1.0], ScalarField::zeros(grid.clone()), &sched.newton, &mut report, |s| {
        if s == 1.0 {
            return Ok(prob.with_rhs(prob.rhs().scaled(c))?);
        }
        let vals = (0..start.len()).map(|i| (1.0 - s) * start[i] + s * c * prob.rhs().eval(i, 0.0).0).collect();
        Ok(prob.with_rhs(RhsSpec::field(vals))?)
    })?;
    let m = weighted_mean(&u, prob.g());
    u.values_mut().iter_mut().for_each(|v| *v -= m);
    let total = integrate(&u, prob.g())?;
    report.check("normalization", total.abs() <= 1e-12, total);
    Ok((u, report))
}

/// Solution h of Δ_g h + tr_g χ = 0 with the boundary data of `prob`.
pub fn harmonic_barrier(prob: &MaProblem, cfg: &NewtonConfig) -> Result<ScalarField, SolverError> {
    let grid = prob.grid();
    let bd = prob
        .boundary()
        .ok_or_else(|| SolverError::Rejected("the barrier needs boundary data".into()))?;
    let op = LinearizedOperator::laplacian(prob.g())?;
    let mask = grid.boundary_mask();
    let rhs: Vec<f64> = (0..grid.len())
        .map(|i| {
            if mask[i] {
                bd.values()[i]
            } else {
                let gi = prob.g().at(i).inverse().expect("metric checked at construction");
                -gi.trace_product(&prob.chi().at(i)).re
            }
        })
        .collect();
    let (h, _, _) = linsolve::solve(&op, &rhs, false, cfg.method, 1e-13, cfg.linear_max_iter.max(4000))?;
    Ok(ScalarField::new(grid.clone(), h)?)
}

/// Dirichlet problem on a box, started from the subsolution ū. Checks
/// ū ≤ u ≤ h where h is the barrier of [`harmonic_barrier`].
pub fn dirichlet_solve(
    prob: &MaProblem,
    sched: &ContinuationSchedule,
) -> Result<(ScalarField, SolveReport), SolverError> {
    sched.validate()?;
    let sub = prob
        .subsolution()
        .ok_or_else(|| SolverError::Rejected("the Dirichlet solve needs a subsolution".into()))?;
    let mut report = SolveReport::new();
    let (u, out) = newton_solve(prob, sub, &sched.newton)?;
    report.final_residual = out.residual;
    report.converged = out.converged;
    report.message = out.message.clone();
    report.stages.push(stage_report("dirichlet".into(), 1.0, &out, &u, prob));
    let h = harmonic_barrier(prob, &sched.newton)?;
    let lower = u.values().iter().zip(sub.values()).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
    let upper = u.values().iter().zip(h.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    report.check("above_subsolution", lower >= -1e-10, lower);
    report.check("below_barrier", upper <= 1e-10, upper);
    Ok((u, report))
}

#[derive(Debug, Clone)]
pub struct SweepStage {
    pub eps: f64,
    pub u: ScalarField,
    pub outcome: NewtonOutcome,
}

fn band_violation(base: &RhsSpec, reg: &RhsSpec, eps: f64, n: usize, u: &[f64]) -> Option<String> {
    let e = eps.powi(n as i32);
    for (i, &ui) in u.iter().enumerate() {
        let p = base.eval(i, ui).0;
        let q = reg.eval(i, ui).0;
        let lo = (p - eps).max(0.5 * e);
        let hi = p.max(e);
        if q < lo * (1.0 - 1e-12) || q > hi * (1.0 + 1e-12) {
            return Some(format!("ψ^ε = {q:e} outside [{lo:e}, {hi:e}] at point {i}"));
        }
    }
    None
}

/// Solves the regularized problems with ψ^ε for the decreasing ε of the
/// schedule, warm-starting each stage from the previous one (the first from
/// the subsolution when there is one). A failed stage ends the sweep.
pub fn epsilon_sweep(
    prob: &MaProblem,
    sched: &ContinuationSchedule,
) -> Result<(Vec<SweepStage>, SolveReport), SolverError> {
    sched.validate()?;
    let grid = prob.grid().clone();
    let n = grid.n();
    let mut report = SolveReport::new();
    let mut stages: Vec<SweepStage> = Vec::new();
    let mut u = match (prob.subsolution(), prob.boundary()) {
        (Some(s), _) => s.clone(),
        (None, Some(b)) => b.clone(),
        (None, None) => ScalarField::zeros(grid.clone()),
    };
    let mut complete = true;
    for &eps in &sched.eps_steps {
        let reg = regularize(prob.rhs(), eps, n);
        if let Some(msg) = band_violation(prob.rhs(), &reg, eps, n, u.values()) {
            return Err(SolverError::Band(msg));
        }
        let p = prob.with_rhs(reg.clone())?;
        let (un, out) = newton_solve(&p, &u, &sched.newton)?;
        if let Some(msg) = band_violation(prob.rhs(), &reg, eps, n, un.values()) {
            return Err(SolverError::Band(msg));
        }
        report.final_residual = out.residual;
        report.stages.push(stage_report(format!("eps={eps:e}"), eps, &out, &un, &p));
        if !out.converged {
            report.message = Some(format!(
                "stage ε = {eps:e} failed: {}; sweep truncated",
                out.message.clone().unwrap_or_else(|| "no convergence".into())
            ));
            complete = false;
            break;
        }
        u = un.clone();
        stages.push(SweepStage { eps, u: un, outcome: out });
    }
    report.converged = complete;
    let mut worst = f64::INFINITY;
    for j in 1..stages.len() {
        for i in 0..j {
            // ε_j < ε_i, so u^{ε_j} ≥ u^{ε_i}
            let d = stages[j].u.values().iter().zip(stages[i].u.values()).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
            worst = worst.min(d);
        }
    }
    if stages.len() > 1 {
        report.check("eps_monotone", worst >= -1e-8, worst);
    }
    if let Some(sub) = prob.subsolution() {
        let lower = stages
            .iter()
            .flat_map(|s| s.u.values().iter().zip(sub.values()).map(|(a, b)| a - b))
            .fold(f64::INFINITY, f64::min);
        report.check("above_subsolution", lower >= -1e-10, lower);
    }
    Ok((stages, report))
}
