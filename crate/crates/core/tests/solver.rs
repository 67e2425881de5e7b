use std::f64::consts::PI;
use std::sync::Arc;

use cmalab::grid::*;
use cmalab::linalg::SmallMat;
use cmalab::ma::*;
use cmalab::oracles::{laplace_box_problem, make_manufactured, make_manufactured_analytic, manufactured_box_problem};
use cmalab::solver::*;

fn torus(n: usize, res: usize) -> Arc<Grid> {
    Arc::new(Grid::torus_uniform(n, 2.0 * PI, res).unwrap())
}

fn unit_box(n: usize, res: usize) -> Arc<Grid> {
    Arc::new(Grid::box_grid(n, &vec![(-1.0, 1.0); 2 * n], &vec![res; 2 * n]).unwrap())
}

fn flat(grid: &Arc<Grid>, rhs: RhsSpec) -> MaProblem {
    let id = Form11Field::identity(grid.clone());
    MaProblem::closed(id.clone(), id, rhs).unwrap()
}

fn manufactured_torus(res: usize) -> (MaProblem, ScalarField) {
    let t = torus(2, res);
    let id = Form11Field::identity(t.clone());
    let c = make_manufactured_analytic(
        &t,
        &id,
        &id,
        |x| 0.1 * x[0].sin() * x[3].cos(),
        |x| {
            let mut h = vec![0.0; 16];
            h[0] = -0.1 * x[0].sin() * x[3].cos();
            h[15] = h[0];
            h[3] = -0.1 * x[0].cos() * x[3].sin();
            h[12] = h[3];
            h
        },
    )
    .unwrap();
    (MaProblem::closed(id.clone(), id, RhsSpec::field(c.psi_star.into_values())).unwrap(), c.u_star)
}

#[test]
fn exact_start_takes_no_iterations() {
    let t = torus(2, 8);
    let id = Form11Field::identity(t.clone());
    let u = ScalarField::from_fn(t.clone(), |x| 0.1 * x[0].sin() * x[3].cos()).unwrap();
    let c = make_manufactured(&u, &id, &id).unwrap();
    let prob = MaProblem::closed(id.clone(), id, RhsSpec::field(c.psi_star.into_values())).unwrap();
    let (v, out) = newton_solve(&prob, &u, &NewtonConfig::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 0);
    assert!(v.max_diff(&u) < 1e-15);
}

#[test]
fn manufactured_torus_converges_at_second_order() {
    let errs: Vec<f64> = [8, 16]
        .iter()
        .map(|&res| {
            let (prob, u_star) = manufactured_torus(res);
            let (u, out) = newton_solve(&prob, &ScalarField::zeros(prob.grid().clone()), &NewtonConfig::default()).unwrap();
            assert!(out.converged, "{out:?}");
            assert!(out.residual <= 1e-10);
            u.max_diff(&u_star)
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 1.8, "{errs:?} order {order}");
}

#[test]
fn backtracking_keeps_iterates_admissible() {
    let t = torus(1, 16);
    let prob = flat(&t, RhsSpec::constant(1.0));
    let h = t.axes()[0].h();
    let k = 4.0 * (h / 2.0).sin().powi(2) / (h * h);
    let a = 4.0 * (1.0 - 1e-3) / k;
    let u0 = ScalarField::from_fn(t.clone(), |x| a * x[0].sin()).unwrap();
    let (_, lam) = admissibility(&u0, &prob);
    assert!((lam - 1e-3).abs() < 1e-9, "{lam}");
    let (u, out) = newton_solve(&prob, &u0, &NewtonConfig::default()).unwrap();
    assert!(out.converged, "{out:?}");
    assert!(out.min_accepted_lambda > 0.0);
    assert!(out.min_accepted_lambda >= 1e-3 * 0.1 * 0.999);
    assert!(u.max_abs() < 1e-9);
}

#[test]
fn newton_refuses_inadmissible_start() {
    let t = torus(1, 16);
    let prob = flat(&t, RhsSpec::constant(1.0));
    let u0 = ScalarField::from_fn(t.clone(), |x| 6.0 * x[0].sin()).unwrap();
    let err = newton_solve(&prob, &u0, &NewtonConfig::default()).unwrap_err();
    assert!(err.is_rejection());
}

#[test]
fn newton_reports_damping_underflow() {
    let t = torus(1, 16);
    let prob = flat(&t, RhsSpec::constant(1.0));
    let u0 = ScalarField::from_fn(t.clone(), |x| 0.5 * x[0].sin()).unwrap();
    let cfg = NewtonConfig { max_iter: 1, ..NewtonConfig::default() };
    let (_, out) = newton_solve(&prob, &u0, &cfg).unwrap();
    assert!(!out.converged);
    assert!(out.message.is_some());
}

#[test]
fn continuation_with_exponential_rhs_stays_at_zero() {
    for (n, res) in [(1, 16), (2, 8)] {
        let t = torus(n, res);
        let prob = flat(&t, RhsSpec::exp_times(vec![1.0; t.len()]));
        let (u, rep) = continuation_solve(&prob, &ContinuationSchedule::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.stages.len(), 11);
        for st in &rep.stages {
            assert_eq!(st.iterations, 0);
            assert!(st.residual <= 1e-10);
        }
        assert!(u.max_abs() <= 1e-10);
        assert!(rep.all_checks_pass());
    }
}

#[test]
fn continuation_solution_is_unique() {
    let t = torus(2, 8);
    let f: Vec<f64> = (0..t.len()).map(|i| 1.0 + 0.1 * t.coords(i)[0].sin()).collect();
    let prob = flat(&t, RhsSpec::exp_times(f));
    let (u, rep) = continuation_solve(&prob, &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged);
    assert!(log_residual(&u, &prob).unwrap().max_abs() <= 1e-10);
    assert!(rep.check_named("max_principle").unwrap().passed);
    assert!(u.max_abs() > 1e-3);

    let seed = ScalarField::from_fn(t.clone(), |x| 0.05 * (x[1] + x[2]).cos()).unwrap();
    let (v, out) = newton_solve(&prob, &seed, &NewtonConfig::default()).unwrap();
    assert!(out.converged);
    assert!(u.max_diff(&v) <= 1e-8);
}

#[test]
fn continuation_is_deterministic() {
    let t = torus(2, 8);
    let f: Vec<f64> = (0..t.len()).map(|i| 1.0 + 0.1 * t.coords(i)[0].sin()).collect();
    let prob = flat(&t, RhsSpec::exp_times(f));
    let (a, ra) = continuation_solve(&prob, &ContinuationSchedule::default()).unwrap();
    let (b, rb) = continuation_solve(&prob, &ContinuationSchedule::default()).unwrap();
    assert_eq!(a.values(), b.values());
    let its = |r: &SolveReport| r.stages.iter().map(|s| s.iterations).collect::<Vec<_>>();
    assert_eq!(its(&ra), its(&rb));
}

#[test]
fn continuation_refuses_unsuitable_problems() {
    let t = torus(1, 16);
    let prob = flat(&t, RhsSpec::constant(1.0));
    assert!(continuation_solve(&prob, &ContinuationSchedule::default()).unwrap_err().is_rejection());
    let b = unit_box(1, 8);
    let id = Form11Field::identity(b.clone());
    let boxed = MaProblem::dirichlet(
        id.clone(),
        id,
        RhsSpec::exp_times(vec![1.0; b.len()]),
        ScalarField::zeros(b.clone()),
        None,
    )
    .unwrap();
    assert!(continuation_solve(&boxed, &ContinuationSchedule::default()).is_err());
}

#[test]
fn calabi_trivial_and_rescaled() {
    let t = torus(2, 8);
    let (u, rep) = torus_calabi_solve(&flat(&t, RhsSpec::constant(1.0)), &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged);
    assert!(u.max_abs() < 1e-12);
    assert!((rep.rescale.unwrap() - 1.0).abs() < 1e-12);

    let (_, rep) = torus_calabi_solve(&flat(&t, RhsSpec::constant(7.0)), &ContinuationSchedule::default()).unwrap();
    assert!((rep.rescale.unwrap() - 1.0 / 7.0).abs() < 1e-10);
    assert!(rep.all_checks_pass());
}

#[test]
fn calabi_recovers_manufactured_solution() {
    let (prob, u_star) = manufactured_torus(12);
    let scaled = prob.with_rhs(prob.rhs().scaled(3.0)).unwrap();
    let (u, rep) = torus_calabi_solve(&scaled, &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged, "{:?}", rep.message);
    assert!(rep.all_checks_pass(), "{:?}", rep.checks);
    assert!((rep.rescale.unwrap() * 3.0 - 1.0).abs() < 1e-3);
    assert!(rep.check_named("normalization").unwrap().value.abs() <= 1e-12);
    assert!(u.max_diff(&u_star) < 5e-3);
}

#[test]
fn calabi_refuses_negative_rhs() {
    let t = torus(1, 16);
    let psi: Vec<f64> = (0..t.len()).map(|i| t.coords(i)[0].sin()).collect();
    let err = torus_calabi_solve(&flat(&t, RhsSpec::field(psi)), &ContinuationSchedule::default()).unwrap_err();
    assert!(err.is_rejection());
}

#[test]
fn dirichlet_equality_case() {
    let b = unit_box(2, 6);
    let chi = Form11Field::uniform(b.clone(), SmallMat::diag(&[2.0, 3.0])).unwrap();
    let zero = ScalarField::zeros(b.clone());
    let prob = MaProblem::dirichlet(
        Form11Field::identity(b.clone()),
        chi,
        RhsSpec::constant(6.0),
        zero.clone(),
        Some(zero),
    )
    .unwrap();
    let (u, rep) = dirichlet_solve(&prob, &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged);
    assert!(u.max_abs() < 1e-14);
    assert!(rep.all_checks_pass(), "{:?}", rep.checks);
}

#[test]
fn dirichlet_manufactured_is_sandwiched() {
    for (n, res) in [(1, 24), (2, 8)] {
        let b = unit_box(n, res);
        let id = Form11Field::identity(b.clone());
        let u_star = ScalarField::from_fn(b.clone(), |x| 0.1 * x[0].sin() * x[2 * n - 1].cos()).unwrap();
        let c = make_manufactured(&u_star, &id, &id).unwrap();
        let (prob, _) = manufactured_box_problem(&c, &id, &id, &[0.05, 0.1, 0.2, 0.4]).unwrap();
        let (u, rep) = dirichlet_solve(&prob, &ContinuationSchedule::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.message);
        assert!(rep.all_checks_pass(), "n = {n}: {:?}", rep.checks);
        assert!(u.max_diff(&u_star) < 1e-9);
        for i in (0..b.len()).filter(|&i| b.is_boundary(i)) {
            assert_eq!(u.values()[i], u_star.values()[i]);
        }
    }
}

#[test]
fn dirichlet_needs_a_subsolution() {
    let b = unit_box(1, 8);
    let id = Form11Field::identity(b.clone());
    let prob = MaProblem::dirichlet(id.clone(), id, RhsSpec::constant(1.0), ScalarField::zeros(b.clone()), None).unwrap();
    assert!(dirichlet_solve(&prob, &ContinuationSchedule::default()).unwrap_err().is_rejection());
}

#[test]
fn comparison_principle_on_ordered_pairs() {
    for (n, res) in [(1, 16), (2, 6)] {
        let b = unit_box(n, res);
        let id = Form11Field::identity(b.clone());
        let zero = ScalarField::zeros(b.clone());
        let solve = |psi: f64| {
            let p =
                MaProblem::dirichlet(id.clone(), id.clone(), RhsSpec::constant(psi), zero.clone(), Some(zero.clone()))
                    .unwrap();
            let (u, rep) = dirichlet_solve(&p, &ContinuationSchedule::default()).unwrap();
            assert!(rep.converged);
            u
        };
        let (ua, ub) = (solve(1.0), solve(0.5));
        let worst = ua.values().iter().zip(ub.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-8, "n = {n}: {worst}");
    }
}

#[test]
fn barrier_is_harmonic_plus_trace() {
    let b = unit_box(1, 16);
    let id = Form11Field::identity(b.clone());
    let phi = ScalarField::from_fn(b.clone(), |x| x[0] * x[1]).unwrap();
    let zero = Form11Field::zeros(b.clone());
    let p = MaProblem::dirichlet(id.clone(), zero, RhsSpec::constant(0.0), phi.clone(), None).unwrap();
    let h = harmonic_barrier(&p, &NewtonConfig::default()).unwrap();
    assert!(h.max_diff(&phi) < 1e-12);
}

fn square_boundary(res: usize) -> ScalarField {
    ScalarField::from_fn(unit_box(1, res), |x| x[0] * x[0] + 0.5 * x[1]).unwrap()
}

#[test]
fn degenerate_sweep_approaches_harmonic_extension() {
    let (prob, h) = laplace_box_problem(&square_boundary(32), 1.0).unwrap();
    let (stages, rep) = epsilon_sweep(&prob, &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged, "{:?}", rep.message);
    assert_eq!(stages.len(), 4);
    assert!(rep.all_checks_pass(), "{:?}", rep.checks);
    let errs: Vec<f64> = stages.iter().map(|s| s.u.max_diff(&h)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[3] <= 5e-3);
    let grads: Vec<f64> = rep.stages.iter().map(|s| s.monitor.grad_sup).collect();
    let (lo, hi) = grads.iter().fold((f64::INFINITY, 0.0f64), |(a, b), g| (a.min(*g), b.max(*g)));
    assert!((hi - lo) / lo <= 0.1, "{grads:?}");
}

#[test]
fn nondegenerate_sweep_stages_agree() {
    let b = unit_box(1, 16);
    let id = Form11Field::identity(b.clone());
    let chi = Form11Field::uniform(b.clone(), SmallMat::diag(&[2.0])).unwrap();
    let zero = ScalarField::zeros(b.clone());
    let prob = MaProblem::dirichlet(id, chi, RhsSpec::constant(1.0), zero.clone(), Some(zero)).unwrap();
    let (stages, rep) = epsilon_sweep(&prob, &ContinuationSchedule::default()).unwrap();
    assert!(rep.converged);
    assert!(rep.all_checks_pass());
    assert!(stages[0].u.max_abs() > 1e-2);
    for w in stages.windows(2) {
        assert!(w[0].u.max_diff(&w[1].u) <= 1e-10);
    }
}

#[test]
fn sweep_truncates_on_failure() {
    let (prob, _) = laplace_box_problem(&square_boundary(16), 1.0).unwrap();
    let mut sched = ContinuationSchedule::default();
    sched.newton.max_iter = 1;
    sched.eps_steps = vec![1e-1, 1e-6];
    let (stages, rep) = epsilon_sweep(&prob, &sched).unwrap();
    assert!(!rep.converged);
    assert!(stages.len() < 2);
    assert!(rep.message.is_some());
}

#[test]
fn schedules_are_validated() {
    let mut s = ContinuationSchedule::default();
    s.s_steps = vec![0.0, 0.5];
    assert!(s.validate().is_err());
    let mut s = ContinuationSchedule::default();
    s.eps_steps = vec![1e-2, 1e-1];
    assert!(s.validate().is_err());
    let mut s = ContinuationSchedule::default();
    s.newton.sigma = 1.0;
    assert!(s.validate().is_err());
    assert!(ContinuationSchedule::default().validate().is_ok());
}

#[test]
fn monitor_of_constant_is_zero() {
    let b = unit_box(1, 8);
    let id = Form11Field::identity(b.clone());
    let c = ScalarField::constant(b.clone(), 2.0);
    let p = MaProblem::dirichlet(id.clone(), id, RhsSpec::constant(1.0), c.clone(), None).unwrap();
    let m = estimate_monitor(&c, &p);
    assert_eq!((m.grad_sup, m.grad_sup_boundary, m.lap_sup, m.lap_sup_boundary), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(m.grad_ratio, None);
    assert_eq!(m.lap_ratio, None);
}

#[test]
fn monitor_ratio_is_stable_under_refinement() {
    let ratios: Vec<f64> = [16, 32]
        .iter()
        .map(|&res| {
            let b = unit_box(1, res);
            let id = Form11Field::identity(b.clone());
            let u = ScalarField::from_fn(b.clone(), |x| 0.1 * x[0].sin() * x[1].cos()).unwrap();
            let p = MaProblem::dirichlet(id.clone(), id, RhsSpec::constant(1.0), u.clone(), None).unwrap();
            estimate_monitor(&u, &p).grad_ratio.unwrap()
        })
        .collect();
    assert!((ratios[0] / ratios[1] - 1.0).abs() <= 0.1, "{ratios:?}");
}

#[test]
fn report_serializes() {
    let t = torus(1, 16);
    let (_, rep) = torus_calabi_solve(&flat(&t, RhsSpec::constant(2.0)), &ContinuationSchedule::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(v["converged"], true);
    assert!(v["stages"].as_array().unwrap().len() >= 1);
    assert!(v["stages"][0]["monitor"]["grad_sup"].is_number());
}
