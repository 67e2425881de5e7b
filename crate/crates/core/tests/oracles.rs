use std::f64::consts::PI;
use std::sync::Arc;

use cmalab::grid::*;
use cmalab::linalg::{SmallMat, C64};
use cmalab::ma::{ma_residual, MaProblem, RhsSpec};
use cmalab::oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn boxed(n: usize, bounds: (f64, f64), ybounds: (f64, f64), res: usize) -> Arc<Grid> {
    let b: Vec<_> = (0..2 * n).map(|k| if k % 2 == 0 { bounds } else { ybounds }).collect();
    Arc::new(Grid::box_grid(n, &b, &vec![res; 2 * n]).unwrap())
}

#[test]
fn im_abs_is_exact_in_one_variable() {
    let g = boxed(1, (-1.0, 1.0), (0.5, 1.5), 16);
    let r = im_abs_check(&g, 3.0, 1e-8).unwrap();
    assert_eq!(r.defect, 0.0);
    assert!(r.passed);
}

#[test]
fn im_abs_defect_shrinks_under_refinement() {
    let coarse = im_abs_check(&boxed(2, (-1.0, 1.0), (0.5, 1.5), 16), 3.0, 1e-8).unwrap();
    let fine = im_abs_check(&boxed(2, (-1.0, 1.0), (0.5, 1.5), 32), 3.0, 1e-8).unwrap();
    assert!(coarse.defect > 0.0);
    assert!(coarse.defect / fine.defect >= 3.0, "{} -> {}", coarse.defect, fine.defect);
}

#[test]
fn im_abs_refuses_boxes_near_the_real_slice() {
    let g = boxed(2, (-1.0, 1.0), (-0.5, 0.5), 8);
    assert!(matches!(im_abs_check(&g, 3.0, 1e-8), Err(OracleError::Precondition(_))));
    let g = boxed(2, (-1.0, 1.0), (0.5, 1.5), 8);
    assert!(im_abs_check(&g, 2.0, 1e-8).is_err());
}

#[test]
fn quadric_pullback_values() {
    assert!((quadric_potential(C64::new(0.0, 1.0)) - 2.0).abs() < 1e-14);
    let [a, b] = quadric_point(C64::new(0.0, 1.0));
    assert!((a.norm_sqr() + b.norm_sqr() - 2f64.cosh()).abs() < 1e-14);
    for x in [-2.0, 0.0, 0.3, 1.7] {
        let [a, b] = quadric_point(C64::new(x, 0.0));
        assert!((a.norm_sqr() + b.norm_sqr() - 1.0).abs() < 1e-15);
        assert_eq!(quadric_potential(C64::new(x, 0.0)), 0.0);
    }
}

#[test]
fn quadric_pullback_is_harmonic() {
    let g = boxed(1, (-1.0, 1.0), (0.2, 1.0), 32);
    let r = quadric_pullback_check(&g).unwrap();
    assert!(r.pullback.passed, "{:?}", r.pullback);
    assert!(r.harmonicity.passed, "{:?}", r.harmonicity);
    let lower = boxed(1, (-1.0, 1.0), (-0.2, 1.0), 8);
    assert!(quadric_pullback_check(&lower).is_err());
}

#[test]
fn radial_identity_matches_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<C64>> = (0..5)
        .map(|_| (0..3).map(|_| C64::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6))).collect())
        .collect();
    for p in [RadialProfile::linear(), RadialProfile::quadratic(), RadialProfile::log()] {
        assert!(radial_identity_defect(&p, &pts) < 1e-14, "{}", p.name);
    }
}

#[test]
fn radial_linear_profile_is_exact() {
    let g = boxed(2, (-0.5, 0.5), (-0.5, 0.5), 6);
    let r = radial_residual_check(&RadialProfile::linear(), &g, 1e-12).unwrap();
    assert!(r.defect < 1e-12);
}

#[test]
fn radial_residual_converges_at_second_order() {
    for p in [RadialProfile::quadratic(), RadialProfile::log()] {
        let d: Vec<f64> = [16, 32]
            .iter()
            .map(|&res| radial_residual_check(&p, &boxed(2, (-0.5, 0.5), (-0.5, 0.5), res), 1.0).unwrap().defect)
            .collect();
        let order = (d[0] / d[1]).log2();
        assert!(order >= 1.9, "{}: {d:?} order {order}", p.name);
    }
}

#[test]
fn radial_refuses_inadmissible_profiles() {
    let bad = RadialProfile { name: "-s", f: |s| -s, df: |_| -1.0, ddf: |_| 0.0 };
    let g = boxed(1, (-0.5, 0.5), (-0.5, 0.5), 6);
    assert!(radial_residual_check(&bad, &g, 1.0).is_err());
}

#[test]
fn leibniz_agrees_with_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 1..=4 {
        let m = SmallMat::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        assert!((leibniz_det(&m) - m.det()).norm() < 1e-12);
    }
}

#[test]
fn manufactured_zero_gives_determinant_ratio() {
    let t = Arc::new(Grid::torus_uniform(2, 2.0 * PI, 8).unwrap());
    let chi = Form11Field::uniform(t.clone(), SmallMat::diag(&[2.0, 3.0])).unwrap();
    let g = Form11Field::uniform(t.clone(), SmallMat::diag(&[1.0, 2.0])).unwrap();
    let c = make_manufactured(&ScalarField::zeros(t.clone()), &g, &chi).unwrap();
    assert!(c.psi_star.values().iter().all(|v| (v - 3.0).abs() < 1e-14));
    assert!(c.boundary.is_none());
}

#[test]
fn manufactured_case_solves_discrete_equation() {
    let t = Arc::new(Grid::torus_uniform(2, 2.0 * PI, 10).unwrap());
    let u = ScalarField::from_fn(t.clone(), |x| 0.1 * x[0].sin() * x[3].cos()).unwrap();
    let id = Form11Field::identity(t.clone());
    let c = make_manufactured(&u, &id, &id).unwrap();
    let prob = MaProblem::closed(id.clone(), id, RhsSpec::field(c.psi_star.values().to_vec())).unwrap();
    assert!(ma_residual(&u, &prob).max_abs() < 1e-14);
}

#[test]
fn manufactured_box_restriction_is_exact() {
    let b = boxed(1, (-1.0, 1.0), (-1.0, 1.0), 8);
    let u = ScalarField::from_fn(b.clone(), |x| x[0] * x[0] + 0.5 * x[1].sin()).unwrap();
    let id = Form11Field::identity(b.clone());
    let c = make_manufactured(&u, &id, &id).unwrap();
    let bd = c.boundary.as_ref().unwrap();
    for i in (0..b.len()).filter(|&i| b.is_boundary(i)) {
        assert_eq!(bd.values()[i], u.values()[i]);
    }
}

#[test]
fn manufactured_refuses_inadmissible_targets() {
    let t = Arc::new(Grid::torus_uniform(1, 2.0 * PI, 8).unwrap());
    let u = ScalarField::from_fn(t.clone(), |x| 6.0 * x[0].sin()).unwrap();
    let id = Form11Field::identity(t.clone());
    assert!(make_manufactured(&u, &id, &id).is_err());
}

#[test]
fn analytic_manufactured_matches_discrete_to_second_order() {
    let err = |res: usize| {
        let t = Arc::new(Grid::torus_uniform(2, 2.0 * PI, res).unwrap());
        let id = Form11Field::identity(t.clone());
        let u = |x: &[f64]| 0.1 * x[0].sin() * x[3].cos();
        let hess = |x: &[f64]| {
            let mut h = vec![0.0; 16];
            h[0] = -0.1 * x[0].sin() * x[3].cos();
            h[15] = h[0];
            h[3] = -0.1 * x[0].cos() * x[3].sin();
            h[12] = h[3];
            h
        };
        let a = make_manufactured_analytic(&t, &id, &id, u, hess).unwrap();
        let d = make_manufactured(&a.u_star, &id, &id).unwrap();
        a.psi_star.max_diff(&d.psi_star)
    };
    let (e1, e2) = (err(8), err(16));
    assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
}

#[test]
fn bump_is_negative_inside_and_zero_on_boundary() {
    let b = boxed(2, (-1.0, 1.0), (-1.0, 1.0), 6);
    let w = boundary_bump(&b);
    for i in 0..b.len() {
        if b.is_boundary(i) {
            assert_eq!(w.values()[i], 0.0);
        } else {
            assert!(w.values()[i] < 0.0);
        }
    }
    let hess = complex_hessian(&w);
    for i in (0..b.len()).filter(|&i| !b.is_boundary(i)) {
        assert!(hess.at(i).hermitian_eigenvalues()[0] > -1e-12);
    }
}

#[test]
fn manufactured_box_problem_finds_a_subsolution() {
    let b = boxed(1, (-1.0, 1.0), (-1.0, 1.0), 12);
    let id = Form11Field::identity(b.clone());
    let u = ScalarField::from_fn(b.clone(), |x| 0.1 * x[0].sin() * x[1].cos()).unwrap();
    let c = make_manufactured(&u, &id, &id).unwrap();
    let (prob, delta) = manufactured_box_problem(&c, &id, &id, &[0.01, 0.02, 0.04, 0.08, 0.16]).unwrap();
    assert!(delta > 0.0);
    let sub = prob.subsolution().unwrap();
    assert!(sub.values().iter().zip(u.values()).all(|(s, u)| s <= u));
}
