use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::{Config, ConfigError, NamedSpec};
use super::{Command, Format, Outcome, Output, RunError, Status};
use crate::geodesic::{solve_geodesic, GeodesicProblem};
use crate::geom::{
    identity_suite, special_coordinates_suite, BIANCHI_TOL, HERMITIAN_TOL, KAHLER_TORSION_TOL,
    SPECIAL_COORDINATES_TOL,
};
use crate::grid::{Form11Field, Grid, ScalarField};
use crate::linalg::{SmallMat, C64, MAX_N};
use crate::ma::{MaProblem, RhsSpec};
use crate::oracles::{
    im_abs_check, laplace_box_problem, make_manufactured, manufactured_box_problem, quadric_pullback_check,
    radial_identity_defect, sine_manufactured, RadialProfile,
};
use crate::solver::{
    continuation_solve, dirichlet_solve, epsilon_sweep, torus_calabi_solve, ContinuationSchedule, NewtonConfig,
    SolveReport,
};

const MONOTONE_TOL: f64 = 1e-8;
const RESCALE_TOL: f64 = 1e-10;
const RADIAL_TOL: f64 = 1e-12;

pub(super) fn dispatch(command: Command, cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    match command {
        Command::VerifyGeometry => verify_geometry(cfg, out),
        Command::SolveTorus => solve_torus(cfg, out),
        Command::SolveDirichlet => solve_dirichlet(cfg, out),
        Command::SolveGeodesic => solve_geodesic_cmd(cfg, out),
        Command::SweepEpsilon => sweep_epsilon(cfg, out),
        Command::OracleCheck => oracle_check(cfg),
    }
}

fn ensure(ok: bool, section: &str, key: &str, msg: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::field(section, key, msg))
    }
}

fn named(cfg: &Config, key: &str, default: &str) -> Result<NamedSpec, ConfigError> {
    NamedSpec::parse("problem", key, &cfg.str_or("problem", key, default))
}

fn unknown(key: &str, name: &str, known: &str) -> ConfigError {
    ConfigError::field("problem", key, format!("unknown spec '{name}' (known: {known})"))
}

fn read_n(cfg: &Config, default: usize, max: usize) -> Result<usize, ConfigError> {
    let n = cfg.get_or("problem", "n", default)?;
    ensure((1..=max).contains(&n), "problem", "n", format!("n = {n} is outside 1..={max}"))?;
    Ok(n)
}

fn read_res(cfg: &Config, key: &str, default: &[usize], min: usize) -> Result<Vec<usize>, ConfigError> {
    let res = cfg.list_or("problem", key, default)?;
    ensure(res.iter().all(|&r| r >= min), "problem", key, format!("resolutions must be at least {min}"))?;
    Ok(res)
}

fn read_bounds(cfg: &Config) -> Result<(f64, f64), ConfigError> {
    let lo: f64 = cfg.get_or("problem", "lo", -1.0)?;
    let hi: f64 = cfg.get_or("problem", "hi", 1.0)?;
    ensure(lo.is_finite() && hi.is_finite() && lo < hi, "problem", "hi", format!("need lo < hi, got [{lo}, {hi}]"))?;
    Ok((lo, hi))
}

fn schedule(cfg: &Config) -> Result<ContinuationSchedule, ConfigError> {
    let d = ContinuationSchedule::default();
    let sec = "schedule";
    let newton = NewtonConfig {
        max_iter: cfg.get_or(sec, "max_iter", d.newton.max_iter)?,
        residual_tol: cfg.get_or(sec, "residual_tol", d.newton.residual_tol)?,
        min_damping: cfg.get_or(sec, "min_damping", d.newton.min_damping)?,
        sigma: cfg.get_or(sec, "sigma", d.newton.sigma)?,
        linear_tol: cfg.get_or(sec, "linear_tol", d.newton.linear_tol)?,
        linear_max_iter: cfg.get_or(sec, "linear_max_iter", d.newton.linear_max_iter)?,
        method: d.newton.method,
    };
    let sched = ContinuationSchedule {
        s_steps: cfg.list_or(sec, "s_steps", &d.s_steps)?,
        eps_steps: cfg.list_or(sec, "eps", &d.eps_steps)?,
        newton,
    };
    sched.validate().map_err(|e| ConfigError::field(sec, "*", e.to_string()))?;
    Ok(sched)
}

#[derive(Debug, Clone, Copy)]
enum Chi {
    Identity,
    Scaled(f64),
}

impl Chi {
    fn read(cfg: &Config) -> Result<Self, ConfigError> {
        let spec = named(cfg, "chi", "identity")?;
        match spec.name.as_str() {
            "identity" => {
                spec.expect("problem", "chi", 0)?;
                Ok(Chi::Identity)
            }
            "scaled" => {
                let c = spec.expect("problem", "chi", 1)?[0];
                ensure(c > 0.0, "problem", "chi", "the scale must be positive")?;
                Ok(Chi::Scaled(c))
            }
            other => Err(unknown("chi", other, "identity, scaled:c")),
        }
    }

    fn factor(self) -> f64 {
        match self {
            Chi::Identity => 1.0,
            Chi::Scaled(c) => c,
        }
    }

    fn build(self, grid: &Arc<Grid>) -> Result<Form11Field, RunError> {
        Ok(Form11Field::uniform(grid.clone(), SmallMat::identity(grid.n()).scale(self.factor()))?)
    }
}

fn orders(errors: &[(usize, f64)]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| {
            let o = (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln();
            o.is_finite().then_some(o)
        })
        .collect()
}

fn track(o: &mut Outcome, label: &str, rep: &SolveReport) -> bool {
    if !rep.converged {
        o.mark(
            Status::NotConverged,
            format!("{label}: {}", rep.message.clone().unwrap_or_else(|| "no convergence".into())),
        );
        return false;
    }
    let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        o.mark(Status::CheckFailed, format!("{label}: failed checks {}", failed.join(", ")));
    }
    true
}

fn verify_geometry(cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    let points = cfg.get_or("problem", "points", 16usize)?;
    ensure(points >= 1, "problem", "points", "need at least one point")?;
    let jets = cfg.get_or("problem", "jets", 50usize)?;
    ensure(jets >= 1, "problem", "jets", "need at least one jet")?;
    let seed = cfg.get_or("problem", "seed", 1u64)?;
    cfg.check_unused()?;

    let rows = identity_suite(points, seed)?;
    let special = special_coordinates_suite(jets, seed)?;
    if out.format == Format::Csv {
        let mut text = String::from("name,kahler,bianchi,torsion_antisymmetry,curvature_hermitian,torsion_norm,passed\n");
        for r in &rows {
            text.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{}\n",
                r.name, r.kahler, r.bianchi, r.torsion_antisymmetry, r.curvature_hermitian, r.torsion_norm, r.passed
            ));
        }
        out.write_text("identity.csv", &text)?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let mut o = Outcome::new(json!({
        "metrics": rows.len(),
        "tolerances": {
            "bianchi": BIANCHI_TOL,
            "curvature_hermitian": HERMITIAN_TOL,
            "kahler_torsion": KAHLER_TORSION_TOL,
            "special_coordinates": SPECIAL_COORDINATES_TOL,
        },
        "identity": rows,
        "special_coordinates": special,
    }));
    if !failed.is_empty() {
        o.mark(Status::CheckFailed, format!("identity defects above tolerance for {}", failed.join(", ")));
    }
    if !special.passed {
        o.mark(Status::CheckFailed, "special coordinates defect above tolerance");
    }
    Ok(o)
}

#[derive(Debug, Clone, Copy)]
enum TorusCase {
    Sine(f64),
    Constant(f64),
    Exp(f64),
}

fn solve_torus(cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    let n = read_n(cfg, 2, MAX_N)?;
    let res = read_res(cfg, "res", &[16, 32], 8)?;
    let period = cfg.get_or("problem", "period", 2.0 * PI)?;
    ensure(period > 0.0 && period.is_finite(), "problem", "period", "the period must be positive")?;
    let chi = Chi::read(cfg)?;
    let spec = named(cfg, "psi", "sine:0.1")?;
    let case = match spec.name.as_str() {
        "sine" => TorusCase::Sine(spec.expect("problem", "psi", 1)?[0]),
        "constant" | "exp" => {
            let c = spec.expect("problem", "psi", 1)?[0];
            ensure(c > 0.0, "problem", "psi", "the constant must be positive")?;
            if spec.name == "exp" {
                TorusCase::Exp(c)
            } else {
                TorusCase::Constant(c)
            }
        }
        other => return Err(unknown("psi", other, "sine:a, constant:c, exp:c").into()),
    };
    let sched = schedule(cfg)?;
    cfg.check_unused()?;

    let s = chi.factor();
    let mut o = Outcome::new(Value::Null);
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for &r in &res {
        let t0 = Instant::now();
        let grid = Arc::new(Grid::torus_uniform(n, period, r)?);
        let chi_f = chi.build(&grid)?;
        let id = Form11Field::identity(grid.clone());
        let (u, rep, exact, expected_rescale) = match case {
            TorusCase::Sine(a) => {
                let c = sine_manufactured(&grid, &chi_f, a)?;
                let prob = MaProblem::closed(id, chi_f, RhsSpec::field(c.psi_star.into_values()))?;
                let (u, rep) = torus_calabi_solve(&prob, &sched)?;
                (u, rep, c.u_star, Some(1.0))
            }
            TorusCase::Constant(c) => {
                let prob = MaProblem::closed(id, chi_f, RhsSpec::constant(c))?;
                let (u, rep) = torus_calabi_solve(&prob, &sched)?;
                (u, rep, ScalarField::zeros(grid.clone()), Some(s.powi(n as i32) / c))
            }
            TorusCase::Exp(c) => {
                let prob = MaProblem::closed(id, chi_f, RhsSpec::exp_times(vec![c; grid.len()]))?;
                let (u, rep) = continuation_solve(&prob, &sched)?;
                let exact = ScalarField::constant(grid.clone(), n as f64 * s.ln() - c.ln());
                (u, rep, exact, None)
            }
        };
        out.dump(&format!("u_{r}"), &u)?;
        let error = u.max_diff(&exact);
        let rescale_error = match (rep.rescale, expected_rescale) {
            (Some(got), Some(want)) => Some((got - want).abs() / want),
            _ => None,
        };
        eprintln!("solve-torus N={r}: error {error:.3e} ({:.1} s)", t0.elapsed().as_secs_f64());
        runs.push(json!({ "res": r, "error": error, "rescale_error": rescale_error, "report": rep }));
        if !track(&mut o, &format!("N = {r}"), &rep) {
            break;
        }
        if let Some(e) = rescale_error.filter(|e| *e > RESCALE_TOL) {
            o.mark(Status::CheckFailed, format!("N = {r}: rescaling constant off by {e:.3e}"));
        }
        errors.push((r, error));
    }
    o.result = json!({
        "n": n,
        "psi": spec.name,
        "runs": runs,
        "orders": matches!(case, TorusCase::Sine(_)).then(|| orders(&errors)),
    });
    Ok(o)
}

#[derive(Debug, Clone, Copy)]
enum BoxCase {
    Sine(f64),
    Quadratic(f64),
}

fn solve_dirichlet(cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    let n = read_n(cfg, 2, MAX_N)?;
    let res = read_res(cfg, "res", &[8, 16], 2)?;
    let (lo, hi) = read_bounds(cfg)?;
    let chi = Chi::read(cfg)?;
    let spec = named(cfg, "psi", "sine:0.1")?;
    let case = match spec.name.as_str() {
        "sine" => BoxCase::Sine(spec.expect("problem", "psi", 1)?[0]),
        "quadratic" => BoxCase::Quadratic(spec.expect("problem", "psi", 1)?[0]),
        other => return Err(unknown("psi", other, "sine:a, quadratic:c").into()),
    };
    let deltas = cfg.list_or("problem", "deltas", &[0.05, 0.1, 0.2, 0.4])?;
    ensure(deltas.iter().all(|d| *d > 0.0), "problem", "deltas", "trial δ must be positive")?;
    let sched = schedule(cfg)?;
    cfg.check_unused()?;

    let mut o = Outcome::new(Value::Null);
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for &r in &res {
        let t0 = Instant::now();
        let grid = Arc::new(Grid::box_grid(n, &vec![(lo, hi); 2 * n], &vec![r; 2 * n])?);
        let chi_f = chi.build(&grid)?;
        let id = Form11Field::identity(grid.clone());
        let mc = match case {
            BoxCase::Sine(a) => sine_manufactured(&grid, &chi_f, a)?,
            BoxCase::Quadratic(c) => {
                let u = ScalarField::from_fn(grid.clone(), |x| c * x.iter().map(|v| v * v).sum::<f64>())?;
                make_manufactured(&u, &id, &chi_f)?
            }
        };
        let (prob, delta) = manufactured_box_problem(&mc, &id, &chi_f, &deltas)?;
        let (u, rep) = dirichlet_solve(&prob, &sched)?;
        out.dump(&format!("u_{r}"), &u)?;
        let error = u.max_diff(&mc.u_star);
        eprintln!("solve-dirichlet N={r}: error {error:.3e} ({:.1} s)", t0.elapsed().as_secs_f64());
        runs.push(json!({ "res": r, "error": error, "delta": delta, "report": rep }));
        if !track(&mut o, &format!("N = {r}"), &rep) {
            break;
        }
        errors.push((r, error));
    }
    o.result = json!({
        "n": n,
        "psi": spec.name,
        "runs": runs,
        "orders": matches!(case, BoxCase::Sine(_)).then(|| orders(&errors)),
    });
    Ok(o)
}

#[derive(Debug, Clone, Copy)]
enum Endpoint {
    Zero,
    Constant(f64),
    Sine(f64),
    Wave(f64),
}

impl Endpoint {
    fn read(cfg: &Config, key: &str, default: &str) -> Result<Self, ConfigError> {
        let spec = named(cfg, key, default)?;
        Ok(match spec.name.as_str() {
            "zero" => {
                spec.expect("problem", key, 0)?;
                Endpoint::Zero
            }
            "constant" => Endpoint::Constant(spec.expect("problem", key, 1)?[0]),
            "sine" => Endpoint::Sine(spec.expect("problem", key, 1)?[0]),
            "wave" => Endpoint::Wave(spec.expect("problem", key, 1)?[0]),
            other => return Err(unknown(key, other, "zero, constant:c, sine:a, wave:a")),
        })
    }

    fn eval(self, x: &[f64]) -> f64 {
        match self {
            Endpoint::Zero => 0.0,
            Endpoint::Constant(c) => c,
            Endpoint::Sine(a) => a * x[0].sin(),
            Endpoint::Wave(a) => a * x[0].cos() * x[x.len() - 1].cos(),
        }
    }
}

fn solve_geodesic_cmd(cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    let n = read_n(cfg, 1, MAX_N - 1)?;
    let res = read_res(cfg, "res", &[16], 8)?;
    ensure(res.len() == 1, "problem", "res", "the geodesic takes a single base resolution")?;
    let period = cfg.get_or("problem", "period", 2.0 * PI)?;
    ensure(period > 0.0 && period.is_finite(), "problem", "period", "the period must be positive")?;
    let t_res = cfg.get_or("problem", "t_res", 16usize)?;
    ensure(t_res >= 2, "problem", "t_res", "need at least two intervals in t")?;
    let e0 = Endpoint::read(cfg, "phi0", "zero")?;
    let e1 = Endpoint::read(cfg, "phi1", "constant:1")?;
    let sched = schedule(cfg)?;
    cfg.check_unused()?;

    let t0 = Instant::now();
    let base = Arc::new(Grid::torus_uniform(n, period, res[0])?);
    let phi0 = ScalarField::from_fn(base.clone(), |x| e0.eval(x))?;
    let phi1 = ScalarField::from_fn(base.clone(), |x| e1.eval(x))?;
    let gp = GeodesicProblem::new(phi0, phi1, t_res)?;
    let sol = solve_geodesic(&gp, &sched)?;
    eprintln!("solve-geodesic: {} stages ({:.1} s)", sol.stages.len(), t0.elapsed().as_secs_f64());

    let grid = gp.product_grid()?;
    let (p0, p1) = (gp.phi0.values(), gp.phi1.values());
    let linear = gp.product_field(&grid, |b, k| {
        let t = gp.t(k);
        (1.0 - t) * p0[b] + t * p1[b]
    })?;
    for k in 0..gp.t_points() {
        out.dump(&format!("phi_{k:04}"), &gp.slice(&sol.path, k))?;
    }
    if let Some(x) = &sol.extrapolated {
        for k in 0..gp.t_points() {
            out.dump(&format!("phi_extrapolated_{k:04}"), &gp.slice(x, k))?;
        }
    }
    let mut o = Outcome::new(json!({
        "n": n,
        "t": (0..gp.t_points()).map(|k| gp.t(k)).collect::<Vec<_>>(),
        "k": sol.k,
        "stages": sol.stages,
        "length": sol.length,
        "deviation_from_linear": {
            "path": sol.path.max_diff(&linear),
            "extrapolated": sol.extrapolated.as_ref().map(|x| x.max_diff(&linear)),
        },
        "report": sol.report,
    }));
    track(&mut o, "geodesic", &sol.report);
    Ok(o)
}

#[derive(Debug, Clone, Copy)]
enum BoundaryData {
    Square,
    Linear(f64, f64),
    Exp(f64),
}

fn sweep_epsilon(cfg: &Config, out: &mut Output) -> Result<Outcome, RunError> {
    let res = read_res(cfg, "res", &[32], 2)?;
    ensure(res.len() == 1, "problem", "res", "the sweep takes a single resolution")?;
    let (lo, hi) = read_bounds(cfg)?;
    let spec = named(cfg, "boundary", "square")?;
    let data = match spec.name.as_str() {
        "square" => {
            spec.expect("problem", "boundary", 0)?;
            BoundaryData::Square
        }
        "linear" => {
            let p = spec.expect("problem", "boundary", 2)?;
            BoundaryData::Linear(p[0], p[1])
        }
        "exp" => BoundaryData::Exp(spec.expect("problem", "boundary", 1)?[0]),
        other => return Err(unknown("boundary", other, "square, linear:a,b, exp:a").into()),
    };
    let k = cfg.get_or("problem", "k", 1.0)?;
    ensure(k > 0.0, "problem", "k", "the subsolution constant must be positive")?;
    let sched = schedule(cfg)?;
    cfg.check_unused()?;

    let t0 = Instant::now();
    let grid = Arc::new(Grid::box_grid(1, &[(lo, hi); 2], &[res[0]; 2])?);
    let phi = ScalarField::from_fn(grid, |x| match data {
        BoundaryData::Square => x[0] * x[0] + 0.5 * x[1],
        BoundaryData::Linear(a, b) => a * x[0] + b * x[1],
        BoundaryData::Exp(a) => (a * x[0]).exp() * (a * x[1]).cos(),
    })?;
    let (prob, h) = laplace_box_problem(&phi, k)?;
    let (stages, rep) = epsilon_sweep(&prob, &sched)?;
    eprintln!("sweep-epsilon: {} stages ({:.1} s)", stages.len(), t0.elapsed().as_secs_f64());
    out.dump("harmonic", &h)?;
    let mut rows = Vec::new();
    let mut all_monotone = true;
    for (i, st) in stages.iter().enumerate() {
        out.dump(&format!("u_{i:02}"), &st.u)?;
        let gap = (i > 0).then(|| {
            st.u.values().iter().zip(stages[i - 1].u.values()).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min)
        });
        let monotone = gap.map(|g| g >= -MONOTONE_TOL);
        all_monotone &= monotone.unwrap_or(true);
        rows.push(json!({
            "eps": st.eps,
            "error": st.u.max_diff(&h),
            "grad_sup": rep.stages[i].monitor.grad_sup,
            "min_increment": gap,
            "monotone": monotone,
        }));
    }
    let grads: Vec<f64> = rep.stages.iter().take(stages.len()).map(|s| s.monitor.grad_sup).collect();
    let (gmin, gmax) = grads.iter().fold((f64::INFINITY, 0.0f64), |(a, b), g| (a.min(*g), b.max(*g)));
    let mut o = Outcome::new(json!({
        "stages": rows,
        "grad_drift": (!grads.is_empty()).then(|| (gmax - gmin) / gmin),
        "report": rep,
    }));
    if !all_monotone {
        o.mark(Status::CheckFailed, "ε-monotonicity violated between consecutive stages");
    }
    track(&mut o, "sweep", &rep);
    Ok(o)
}

fn oracle_check(cfg: &Config) -> Result<Outcome, RunError> {
    let n = read_n(cfg, 2, MAX_N)?;
    let res = cfg.get_or("problem", "res", 32usize)?;
    let quadric_res = cfg.get_or("problem", "quadric_res", 32usize)?;
    let re = cfg.list_or("problem", "re_range", &[-1.0, 1.0])?;
    let im = cfg.list_or("problem", "im_range", &[0.5, 1.5])?;
    for (key, r) in [("re_range", &re), ("im_range", &im)] {
        ensure(r.len() == 2 && r[0] < r[1], "problem", key, "expected lo, hi with lo < hi")?;
    }
    let safety = cfg.get_or("problem", "safety", 3.0)?;
    let tolerance = cfg.get_or("problem", "tolerance", 1e-8)?;
    let points = cfg.get_or("problem", "radial_points", 64usize)?;
    let seed = cfg.get_or("problem", "seed", 1u64)?;
    cfg.check_unused()?;

    let bounds: Vec<(f64, f64)> = (0..2 * n).map(|a| if a % 2 == 0 { (re[0], re[1]) } else { (im[0], im[1]) }).collect();
    let grid = Arc::new(Grid::box_grid(n, &bounds, &vec![res; 2 * n])?);
    let im_abs = im_abs_check(&grid, safety, tolerance)?;
    let qgrid = Arc::new(Grid::box_grid(1, &[(re[0], re[1]), (im[0], im[1])], &[quadric_res; 2])?);
    let quadric = quadric_pullback_check(&qgrid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs: Vec<Vec<C64>> = (0..points)
        .map(|_| (0..n).map(|_| C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect())
        .collect();
    let radial: Vec<Value> = [RadialProfile::linear(), RadialProfile::quadratic(), RadialProfile::log()]
        .iter()
        .map(|p| {
            let d = radial_identity_defect(p, &zs);
            json!({ "profile": p.name, "defect": d, "tolerance": RADIAL_TOL, "passed": d <= RADIAL_TOL })
        })
        .collect();
    let mut failed: Vec<String> = [&im_abs, &quadric.pullback, &quadric.harmonicity]
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({:.3e} > {:.1e})", r.name, r.defect, r.tolerance))
        .collect();
    failed.extend(radial.iter().filter(|r| r["passed"] == false).map(|r| format!("radial {}", r["profile"])));
    let mut o = Outcome::new(json!({ "im_abs": im_abs, "quadric": quadric, "radial": radial }));
    if !failed.is_empty() {
        o.mark(Status::CheckFailed, format!("failed oracles: {}", failed.join(", ")));
    }
    Ok(o)
}
