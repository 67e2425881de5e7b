//! Closed-form test metrics with exact partials.

use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ChartJet, GeomError};
use crate::linalg::{C64, MAX_N};

/// A metric given in closed form on a neighbourhood of the origin of C^n.
pub trait AnalyticMetric: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    /// Whether the metric is Kähler by construction.
    fn is_kahler(&self) -> bool;
    /// Exact jet at `z`.
    fn jet(&self, z: &[C64]) -> Result<ChartJet, GeomError>;
    /// Metric components only; defaults to the jet.
    fn metric(&self, z: &[C64]) -> Result<Array2<C64>, GeomError> {
        Ok(self.jet(z)?.g)
    }
}

/// Polynomial in z_1..z_n and \bar z_1..\bar z_n with complex coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    n: usize,
    /// exponent layout: [z_1..z_n, \bar z_1..\bar z_n]
    terms: Vec<([u8; 2 * MAX_N], C64)>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Poly { n, terms: Vec::new() }
    }

    pub fn constant(n: usize, c: C64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(&[], &[], c);
        p
    }

    /// Adds `c * prod z_{hol[i]} * prod conj(z_{anti[i]})`.
    pub fn add_term(&mut self, hol: &[usize], anti: &[usize], c: C64) {
        let mut e = [0u8; 2 * MAX_N];
        for &h in hol {
            e[h] += 1;
        }
        for &a in anti {
            e[self.n + a] += 1;
        }
        match self.terms.iter_mut().find(|(x, _)| *x == e) {
            Some((_, v)) => *v += c,
            None => self.terms.push((e, c)),
        }
    }

    /// Adds a term plus its complex conjugate, which keeps the polynomial real.
    pub fn add_real_term(&mut self, hol: &[usize], anti: &[usize], c: C64) {
        self.add_term(hol, anti, c);
        self.add_term(anti, hol, c.conj());
    }

    /// Complex conjugate polynomial.
    pub fn conj(&self) -> Self {
        let n = self.n;
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut f = [0u8; 2 * MAX_N];
                for k in 0..n {
                    f[k] = e[n + k];
                    f[n + k] = e[k];
                }
                (f, c.conj())
            })
            .collect();
        Poly { n, terms }
    }

    fn derive(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[var] > 0)
            .map(|(e, c)| {
                let mut f = *e;
                f[var] -= 1;
                (f, c * e[var] as f64)
            })
            .collect();
        Poly { n: self.n, terms }
    }

    /// d/dz_k
    pub fn dz(&self, k: usize) -> Self {
        self.derive(k)
    }

    /// d/d\bar z_k
    pub fn dzbar(&self, k: usize) -> Self {
        self.derive(self.n + k)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let n = self.n;
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut v = *c;
                for k in 0..n {
                    for _ in 0..e[k] {
                        v *= z[k];
                    }
                    for _ in 0..e[n + k] {
                        v *= z[k].conj();
                    }
                }
                v
            })
            .sum()
    }
}

/// Hermitian metric whose entries are polynomials.
#[derive(Debug, Clone)]
pub struct PolyMetric {
    name: String,
    n: usize,
    kahler: bool,
    entries: Vec<Poly>,
    dg: Vec<Poly>,
    ddg: Vec<Poly>,
    hdg: Vec<Poly>,
}

impl PolyMetric {
    /// From the upper triangle; the lower one is the conjugate transpose.
    pub fn from_upper(name: &str, n: usize, upper: impl Fn(usize, usize) -> Poly, kahler: bool) -> Self {
        let mut entries = vec![Poly::zero(n); n * n];
        for i in 0..n {
            for j in i..n {
                let p = upper(i, j);
                if i != j {
                    entries[j * n + i] = p.conj();
                }
                entries[i * n + j] = p;
            }
        }
        Self::build(name, n, entries, kahler)
    }

    /// g_{i\bar j} = d^2 Φ / dz_i d\bar z_j for a real potential Φ.
    pub fn from_potential(name: &str, n: usize, potential: &Poly) -> Self {
        let entries = (0..n * n)
            .map(|ij| potential.dz(ij / n).dzbar(ij % n))
            .collect();
        Self::build(name, n, entries, true)
    }

    fn build(name: &str, n: usize, entries: Vec<Poly>, kahler: bool) -> Self {
        let mut dg = Vec::with_capacity(n * n * n);
        let mut ddg = Vec::with_capacity(n.pow(4));
        let mut hdg = Vec::with_capacity(n.pow(4));
        for e in &entries {
            for k in 0..n {
                let d = e.dz(k);
                for l in 0..n {
                    ddg.push(d.dzbar(l));
                    hdg.push(d.dz(l));
                }
                dg.push(d);
            }
        }
        PolyMetric { name: name.to_string(), n, kahler, entries, dg, ddg, hdg }
    }
}

impl AnalyticMetric for PolyMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn is_kahler(&self) -> bool {
        self.kahler
    }
    fn jet(&self, z: &[C64]) -> Result<ChartJet, GeomError> {
        let n = self.n;
        let g = Array2::from_shape_fn((n, n), |(i, j)| self.entries[i * n + j].eval(z));
        let dg = Array3::from_shape_fn((n, n, n), |(i, j, k)| self.dg[(i * n + j) * n + k].eval(z));
        let ddg = Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
            self.ddg[((i * n + j) * n + k) * n + l].eval(z)
        });
        let hdg = Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
            self.hdg[((i * n + j) * n + k) * n + l].eval(z)
        });
        ChartJet::new(g, dg, ddg, Some(hdg))
    }
    fn metric(&self, z: &[C64]) -> Result<Array2<C64>, GeomError> {
        let n = self.n;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| self.entries[i * n + j].eval(z)))
    }
}

/// Conformally flat metric g = e^f I with f = sum c_k |z_k|^2 + 2 Re(sum a_k z_k).
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    name: String,
    c: Vec<f64>,
    a: Vec<C64>,
}

impl ConformalMetric {
    pub fn new(name: &str, c: Vec<f64>, a: Vec<C64>) -> Self {
        assert_eq!(c.len(), a.len());
        ConformalMetric { name: name.to_string(), c, a }
    }
}

impl AnalyticMetric for ConformalMetric {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn is_kahler(&self) -> bool {
        // d(e^f) ∧ ω vanishes only in complex dimension one
        self.dim() == 1
    }
    fn jet(&self, z: &[C64]) -> Result<ChartJet, GeomError> {
        let n = self.dim();
        let f: f64 = (0..n)
            .map(|k| self.c[k] * z[k].norm_sqr() + 2.0 * (self.a[k] * z[k]).re)
            .sum();
        let phi = f.exp();
        // f_k = df/dz_k
        let fk: Vec<C64> = (0..n).map(|k| self.c[k] * z[k].conj() + self.a[k]).collect();
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let g = Array2::from_shape_fn((n, n), |(i, j)| C64::new(phi * delta(i, j), 0.0));
        let dg = Array3::from_shape_fn((n, n, n), |(i, j, k)| fk[k] * phi * delta(i, j));
        let ddg = Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
            (fk[k] * fk[l].conj() + self.c[k] * delta(k, l)) * phi * delta(i, j)
        });
        let hdg = Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| fk[k] * fk[l] * phi * delta(i, j));
        ChartJet::new(g, dg, ddg, Some(hdg))
    }
}

fn rand_c(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Random real quartic Kähler potential |z|^2 + small cubic and quartic terms.
pub fn random_kahler(n: usize, seed: u64) -> PolyMetric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Poly::zero(n);
    for k in 0..n {
        phi.add_term(&[k], &[k], C64::new(1.0, 0.0));
    }
    for _ in 0..6 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        let d = rng.gen_range(0..n);
        phi.add_real_term(&[a, b], &[c], rand_c(&mut rng, 0.15));
        phi.add_real_term(&[a, b], &[c, d], rand_c(&mut rng, 0.1));
        phi.add_real_term(&[a, b, c], &[d], rand_c(&mut rng, 0.1));
    }
    PolyMetric::from_potential(&format!("kahler-poly-{seed}"), n, &phi)
}

/// Random non-Kähler polynomial metric: identity plus Hermitian linear and
/// quadratic perturbations.
pub fn random_hermitian(n: usize, seed: u64) -> PolyMetric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut upper = vec![Poly::zero(n); n * n];
    for i in 0..n {
        for j in i..n {
            let p = &mut upper[i * n + j];
            if i == j {
                p.add_term(&[], &[], C64::new(1.0, 0.0));
                for k in 0..n {
                    p.add_real_term(&[k], &[], rand_c(&mut rng, 0.3));
                    for l in 0..n {
                        p.add_real_term(&[k], &[l], rand_c(&mut rng, 0.15));
                        p.add_real_term(&[k, l], &[], rand_c(&mut rng, 0.15));
                    }
                }
            } else {
                for k in 0..n {
                    p.add_term(&[k], &[], rand_c(&mut rng, 0.3));
                    p.add_term(&[], &[k], rand_c(&mut rng, 0.3));
                    for l in 0..n {
                        p.add_term(&[k], &[l], rand_c(&mut rng, 0.15));
                        p.add_term(&[k, l], &[], rand_c(&mut rng, 0.15));
                        p.add_term(&[], &[k, l], rand_c(&mut rng, 0.15));
                    }
                }
            }
        }
    }
    PolyMetric::from_upper(&format!("hermitian-poly-{seed}"), n, |i, j| upper[i * n + j].clone(), false)
}

/// g_{1\bar 1} = g_{2\bar 2} = 1, g_{1\bar 2} = a z_2 on C^2: non-Kähler with
/// torsion T^2_{21} = a at the origin.
pub fn off_diagonal_holomorphic(a: C64) -> PolyMetric {
    PolyMetric::from_upper(
        "offdiag-holomorphic",
        2,
        move |i, j| match (i, j) {
            (0, 1) => {
                let mut p = Poly::zero(2);
                p.add_term(&[1], &[], a);
                p
            }
            _ => Poly::constant(2, C64::new(1.0, 0.0)),
        },
        false,
    )
}

/// g_{1\bar 1} = 1, g_{1\bar 2} = \bar z_2, g_{2\bar 2} = 1 on C^2.
///
/// This one is in fact Kähler (potential |z|^2 + Re(z_1 \bar z_2^2)), so
/// its torsion vanishes identically.
pub fn off_diagonal_antiholomorphic() -> PolyMetric {
    PolyMetric::from_upper(
        "offdiag-antiholomorphic",
        2,
        |i, j| match (i, j) {
            (0, 1) => {
                let mut p = Poly::zero(2);
                p.add_term(&[], &[1], C64::new(1.0, 0.0));
                p
            }
            _ => Poly::constant(2, C64::new(1.0, 0.0)),
        },
        true,
    )
}

/// g = diag(1 + b |z_2|^2, 1 + c |z_1|^2) on C^2, non-Kähler for b, c != 0.
pub fn cross_diagonal(b: f64, c: f64) -> PolyMetric {
    PolyMetric::from_upper(
        "cross-diagonal",
        2,
        move |i, j| {
            let mut p = Poly::zero(2);
            match (i, j) {
                (0, 0) => {
                    p.add_term(&[], &[], C64::new(1.0, 0.0));
                    p.add_term(&[1], &[1], C64::new(b, 0.0));
                }
                (1, 1) => {
                    p.add_term(&[], &[], C64::new(1.0, 0.0));
                    p.add_term(&[0], &[0], C64::new(c, 0.0));
                }
                _ => {}
            }
            p
        },
        false,
    )
}

/// Flat metric with constant Hermitian positive definite components.
pub fn constant_metric(name: &str, g: Array2<C64>) -> PolyMetric {
    let n = g.nrows();
    PolyMetric::from_upper(name, n, |i, j| Poly::constant(n, g[[i, j]]), true)
}

/// Built-in corpus on C^2 used by the identity checks: flat, conformal,
/// Kähler-potential and the two hand-built non-Kähler families plus random
/// non-Kähler members. 24 metrics.
pub fn corpus() -> Vec<Box<dyn AnalyticMetric>> {
    let mut out: Vec<Box<dyn AnalyticMetric>> = Vec::new();
    out.push(Box::new(constant_metric(
        "flat",
        Array2::eye(2).mapv(|x: f64| C64::new(x, 0.0)),
    )));
    let mut g = Array2::eye(2).mapv(|x: f64| C64::new(2.0 * x, 0.0));
    g[[0, 1]] = C64::new(0.3, -0.4);
    g[[1, 0]] = C64::new(0.3, 0.4);
    out.push(Box::new(constant_metric("flat-skew", g)));
    out.push(Box::new(ConformalMetric::new(
        "conformal-radial",
        vec![1.0, 1.0],
        vec![C64::new(0.0, 0.0); 2],
    )));
    out.push(Box::new(ConformalMetric::new(
        "conformal-tilted",
        vec![0.7, -0.4],
        vec![C64::new(0.2, -0.1), C64::new(-0.3, 0.25)],
    )));
    for seed in 0..6 {
        out.push(Box::new(random_kahler(2, 100 + seed)));
    }
    out.push(Box::new(off_diagonal_antiholomorphic()));
    out.push(Box::new(off_diagonal_holomorphic(C64::new(1.0, 0.0))));
    out.push(Box::new(off_diagonal_holomorphic(C64::new(0.4, -0.7))));
    out.push(Box::new(cross_diagonal(1.0, 0.0)));
    out.push(Box::new(cross_diagonal(0.6, -0.3)));
    for seed in 0..9 {
        out.push(Box::new(random_hermitian(2, 200 + seed)));
    }
    out
}
