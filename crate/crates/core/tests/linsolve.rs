use std::f64::consts::PI;
use std::sync::Arc;

use cmalab::grid::*;
use cmalab::linalg::{SmallMat, C64};
use cmalab::linsolve::*;
use cmalab::ma::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn residual(op: &LinearizedOperator, x: &[f64], b: &[f64], shift: f64) -> f64 {
    let mut ax = vec![0.0; x.len()];
    op.apply(x, &mut ax);
    let mask = op.boundary_mask();
    ax.iter()
        .zip(b)
        .zip(mask)
        .map(|((a, b), m)| if *m { (a - b).abs() } else { (a - shift - b).abs() })
        .fold(0.0, f64::max)
}

#[test]
fn fast_inverse_is_exact_for_constant_coefficients() {
    let grid = Arc::new(
        Grid::new(
            2,
            vec![
                Axis::periodic(2.0 * PI, 8),
                Axis::periodic(3.0, 10),
                Axis::dirichlet(0.0, 1.0, 7),
                Axis::frozen(0.0),
            ],
        )
        .unwrap(),
    );
    let g = Form11Field::uniform(grid.clone(), SmallMat::diag(&[0.5, 2.0])).unwrap();
    let op = LinearizedOperator::laplacian(&g).unwrap();
    let (diag, z) = op.mean_coefficients();
    assert_eq!(z, 0.0);
    let pre = FastInverse::new(&grid, &diag, 0.0);
    let mut r = random(grid.len(), 1);
    for (i, v) in r.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *v = 0.0;
        }
    }
    let mut x = vec![0.0; grid.len()];
    pre.apply(&r, &mut x);
    assert!(residual(&op, &x, &r, 0.0) < 1e-11);
}

#[test]
fn fast_inverse_drops_the_constant_mode_on_a_torus() {
    let grid = Arc::new(Grid::torus_uniform(1, 2.0 * PI, 16).unwrap());
    let op = LinearizedOperator::laplacian(&Form11Field::identity(grid.clone())).unwrap();
    let pre = FastInverse::new(&grid, &op.mean_coefficients().0, 0.0);
    let mut r = random(grid.len(), 2);
    let m = r.iter().sum::<f64>() / r.len() as f64;
    r.iter_mut().for_each(|v| *v -= m);
    let mut x = vec![0.0; grid.len()];
    pre.apply(&r, &mut x);
    assert!(x.iter().sum::<f64>().abs() < 1e-10);
    assert!(residual(&op, &x, &r, 0.0) < 1e-11);
}

fn variable_box_operator(n: usize, res: usize) -> LinearizedOperator {
    let b = Arc::new(Grid::box_grid(n, &vec![(-1.0, 1.0); 2 * n], &vec![res; 2 * n]).unwrap());
    let g = Form11Field::from_fn(b.clone(), |x| {
        let mut m = SmallMat::diag(&vec![1.0 + 0.3 * x[0] * x[0]; n]);
        if n > 1 {
            m[(0, 1)] = C64::new(0.1, 0.2 * x[1]);
            m[(1, 0)] = m[(0, 1)].conj();
        }
        m
    });
    let u = ScalarField::from_fn(b.clone(), |x| 0.2 * x.iter().map(|v| v * v).sum::<f64>() + 0.05 * (x[0] * x[1]).sin())
        .unwrap();
    let prob = MaProblem::dirichlet(g.clone(), g, RhsSpec::exp_times(vec![1.5; b.len()]), u.clone(), None).unwrap();
    LinearizedOperator::new(&u, &prob).unwrap()
}

#[test]
fn direct_and_iterative_agree() {
    for n in [1, 2] {
        let op = variable_box_operator(n, if n == 1 { 20 } else { 8 });
        let b = random(op.len(), 3);
        let (xd, _, sd) = solve(&op, &b, false, Method::Direct, 1e-12, 500).unwrap();
        let (xi, _, si) = solve(&op, &b, false, Method::Iterative, 1e-12, 500).unwrap();
        assert!(sd.direct && !si.direct);
        assert!(residual(&op, &xd, &b, 0.0) < 1e-10);
        assert!(residual(&op, &xi, &b, 0.0) < 1e-9);
        let diff = xd.iter().zip(&xi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
        // boundary rows reproduce the right-hand side
        for (i, m) in op.boundary_mask().iter().enumerate() {
            if *m {
                assert_eq!(xd[i], b[i]);
            }
        }
    }
}

#[test]
fn bordered_torus_systems() {
    let grid = Arc::new(Grid::torus_uniform(1, 2.0 * PI, 12).unwrap());
    let g = Form11Field::identity(grid.clone());
    let u = ScalarField::from_fn(grid.clone(), |x| 0.1 * x[0].sin() * (x[1] + x[0]).cos()).unwrap();
    let prob = MaProblem::closed(g.clone(), g, RhsSpec::constant(1.0)).unwrap();
    let op = LinearizedOperator::new(&u, &prob).unwrap();
    let b: Vec<f64> = random(grid.len(), 4).iter().map(|v| v + 0.3).collect();
    for method in [Method::Direct, Method::Iterative] {
        let (x, s, _) = solve(&op, &b, true, method, 1e-12, 500).unwrap();
        assert!((x.iter().sum::<f64>() / x.len() as f64).abs() < 1e-12);
        assert!(residual(&op, &x, &b, s) < 1e-9, "{method:?}");
    }
}

#[test]
fn dot_is_deterministic() {
    let a = random(100_003, 5);
    let b = random(100_003, 6);
    let d1 = dot(&a, &b);
    let d2 = dot(&a, &b);
    assert_eq!(d1.to_bits(), d2.to_bits());
    let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    assert!((d1 - naive).abs() < 1e-10);
}
