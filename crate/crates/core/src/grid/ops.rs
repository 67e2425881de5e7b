use std::sync::Arc;

use super::{AxisKind, Form11Field, Grid, GridError, ScalarField};
use crate::linalg::{pack_hermitian, SmallMat, C64, MAX_N};

const IMAG_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation in iteration order.
pub fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Precomputed neighbour offsets and spacings for central differences.
#[derive(Debug, Clone)]
pub struct Stencil {
    d: usize,
    n: usize,
    kind: [AxisKind; 2 * MAX_N],
    stride: [isize; 2 * MAX_N],
    points: [usize; 2 * MAX_N],
    h: [f64; 2 * MAX_N],
    active: Vec<usize>,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let d = grid.axes().len();
        let mut kind = [AxisKind::Frozen; 2 * MAX_N];
        let mut stride = [0isize; 2 * MAX_N];
        let mut points = [1usize; 2 * MAX_N];
        let mut h = [1.0; 2 * MAX_N];
        for (a, ax) in grid.axes().iter().enumerate() {
            kind[a] = ax.kind;
            stride[a] = grid.strides()[a] as isize;
            points[a] = ax.points();
            h[a] = ax.h();
        }
        let active = (0..d).filter(|&a| kind[a] != AxisKind::Frozen).collect();
        Stencil { d, n: grid.n(), kind, stride, points, h, active }
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn active_axes(&self) -> &[usize] {
        &self.active
    }

    /// Linear offset of the neighbour one step along `axis` in direction
    /// `dir` (+1 or -1); wraps on periodic axes.
    #[inline(always)]
    pub fn offset(&self, axis: usize, m_a: usize, dir: isize) -> isize {
        let s = self.stride[axis];
        if self.kind[axis] == AxisKind::Periodic {
            let last = self.points[axis] - 1;
            if dir > 0 && m_a == last {
                return -(last as isize) * s;
            }
            if dir < 0 && m_a == 0 {
                return last as isize * s;
            }
        }
        dir * s
    }

    /// Real second differences D_ab at an interior point, symmetric in (a, b);
    /// zero rows for frozen axes.
    #[inline]
    pub fn second_differences(&self, u: &[f64], idx: usize, m: &[usize]) -> [[f64; 2 * MAX_N]; 2 * MAX_N] {
        let mut r = [[0.0; 2 * MAX_N]; 2 * MAX_N];
        let i = idx as isize;
        let u0 = u[idx];
        let mut off = [[0isize; 2]; 2 * MAX_N];
        for &a in &self.active {
            off[a] = [self.offset(a, m[a], 1), self.offset(a, m[a], -1)];
            let (p, q) = (off[a][0], off[a][1]);
            r[a][a] = (u[(i + p) as usize] - 2.0 * u0 + u[(i + q) as usize]) / (self.h[a] * self.h[a]);
        }
        for (ia, &a) in self.active.iter().enumerate() {
            for &b in &self.active[ia + 1..] {
                let [ap, am] = off[a];
                let [bp, bm] = off[b];
                let v = (u[(i + ap + bp) as usize] - u[(i + ap + bm) as usize] - u[(i + am + bp) as usize]
                    + u[(i + am + bm) as usize])
                    / (4.0 * self.h[a] * self.h[b]);
                r[a][b] = v;
                r[b][a] = v;
            }
        }
        r
    }

    /// Complex Hessian u_{i\bar j} at an interior point.
    #[inline]
    pub fn hessian_at(&self, u: &[f64], idx: usize, m: &[usize]) -> SmallMat {
        complex_from_real(self.n, &self.second_differences(u, idx, m))
    }

    /// d u / d z_k = (u_x - i u_y) / 2, central differences in the interior
    /// and second-order one-sided differences at Dirichlet end points.
    #[inline]
    pub fn gradient_at(&self, u: &[f64], idx: usize, m: &[usize]) -> [C64; MAX_N] {
        let mut real = [0.0; 2 * MAX_N];
        let i = idx as isize;
        for &a in &self.active {
            let s = self.stride[a];
            let last = self.points[a] - 1;
            let at = |o: isize| u[(i + o) as usize];
            real[a] = if self.kind[a] == AxisKind::Dirichlet && m[a] == 0 {
                (-3.0 * at(0) + 4.0 * at(s) - at(2 * s)) / (2.0 * self.h[a])
            } else if self.kind[a] == AxisKind::Dirichlet && m[a] == last {
                (3.0 * at(0) - 4.0 * at(-s) + at(-2 * s)) / (2.0 * self.h[a])
            } else {
                (at(self.offset(a, m[a], 1)) - at(self.offset(a, m[a], -1))) / (2.0 * self.h[a])
            };
        }
        let mut g = [C64::new(0.0, 0.0); MAX_N];
        for k in 0..self.n {
            g[k] = C64::new(0.5 * real[2 * k], -0.5 * real[2 * k + 1]);
        }
        g
    }

    pub fn dims(&self) -> usize {
        self.d
    }
}

/// u_{i\bar j} = 1/4 [(D_{x_i x_j} + D_{y_i y_j}) + i (D_{x_i y_j} - D_{y_i x_j})].
/// Only the upper triangle is formed; the lower one is its conjugate, so the
/// result is exactly Hermitian.
#[inline]
pub(crate) fn complex_from_real(n: usize, r: &[[f64; 2 * MAX_N]; 2 * MAX_N]) -> SmallMat {
    let mut h = SmallMat::zeros(n);
    for i in 0..n {
        h[(i, i)] = C64::new(0.25 * (r[2 * i][2 * i] + r[2 * i + 1][2 * i + 1]), 0.0);
        for j in i + 1..n {
            let v = C64::new(
                0.25 * (r[2 * i][2 * j] + r[2 * i + 1][2 * j + 1]),
                0.25 * (r[2 * i][2 * j + 1] - r[2 * i + 1][2 * j]),
            );
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

/// Discrete complex Hessian. On a box it is evaluated at interior points
/// only; boundary points carry the zero matrix.
pub fn complex_hessian(u: &ScalarField) -> Form11Field {
    let grid = u.grid();
    let st = Stencil::new(grid);
    let n = grid.n();
    let mut data = vec![0.0; grid.len() * n * n];
    let vals = u.values();
    grid.par_fill(&mut data, n * n, |idx, m, slot| {
        if !grid.is_boundary_m(m) {
            pack_hermitian(&st.hessian_at(vals, idx, m), slot);
        }
    });
    Form11Field::from_packed(grid.clone(), data)
}

fn check_same(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<(), GridError> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(GridError::Mismatch("fields live on different grids".into()))
    }
}

fn uniform_inverse(g: &Form11Field) -> Result<Option<SmallMat>, GridError> {
    if !g.is_uniform() {
        return Ok(None);
    }
    g.at(0).inverse().map(Some).map_err(|e| GridError::Mismatch(format!("metric: {e:?}")))
}

/// |∇u|_g = (g^{k\bar l} u_k u_{\bar l})^{1/2} at every point.
pub fn gradient_norms(u: &ScalarField, g: &Form11Field) -> Result<Vec<f64>, GridError> {
    check_same(u.grid(), g.grid())?;
    let grid = u.grid();
    let st = Stencil::new(grid);
    let n = grid.n();
    let vals = u.values();
    let uniform = uniform_inverse(g)?;
    let out = grid.par_map(|idx, m| {
        let du = st.gradient_at(vals, idx, m);
        let inv = match &uniform {
            Some(inv) => *inv,
            None => match g.at(idx).inverse() {
                Ok(inv) => inv,
                Err(_) => return f64::NAN,
            },
        };
        let mut s = C64::new(0.0, 0.0);
        for k in 0..n {
            for l in 0..n {
                s += du[l].conj() * inv[(l, k)] * du[k];
            }
        }
        s.re.max(0.0).sqrt()
    });
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return Err(GridError::Mismatch(format!("metric is singular at point {i}")));
    }
    Ok(out)
}

/// sup |∇u|_g over all grid points.
pub fn gradient_sup(u: &ScalarField, g: &Form11Field) -> Result<f64, GridError> {
    Ok(gradient_norms(u, g)?.into_iter().fold(0.0, f64::max))
}

/// Δu = g^{i\bar j} u_{i\bar j}; zero at box boundary points.
pub fn chern_laplacian(u: &ScalarField, g: &Form11Field) -> Result<ScalarField, GridError> {
    check_same(u.grid(), g.grid())?;
    let grid = u.grid();
    let st = Stencil::new(grid);
    let vals = u.values();
    let uniform = uniform_inverse(g)?;
    let trace = |idx: usize, m: &[usize]| -> Result<f64, GridError> {
        let h = st.hessian_at(vals, idx, m);
        let inv = match &uniform {
            Some(inv) => *inv,
            None => g.at(idx).inverse().map_err(|e| GridError::Mismatch(format!("metric: {e:?}")))?,
        };
        let z = inv.trace_product(&h);
        let scale = 1.0 + z.re.abs();
        if z.im.abs() > IMAG_TOL * scale {
            return Err(GridError::ImaginaryResidue(z.im));
        }
        Ok(z.re)
    };
    let out: Vec<f64> = grid.par_map(|idx, m| {
        if grid.is_boundary_m(m) {
            return 0.0;
        }
        trace(idx, m).unwrap_or(f64::NAN)
    });
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        let mut m = vec![0; grid.axes().len()];
        grid.multi_index(i, &mut m);
        trace(i, &m)?;
    }
    ScalarField::new(grid.clone(), out)
}

/// Midpoint quadrature of f det(vol) over a torus.
pub fn integrate(f: &ScalarField, vol: &Form11Field) -> Result<f64, GridError> {
    check_same(f.grid(), vol.grid())?;
    let grid = f.grid();
    if !grid.is_torus() {
        return Err(GridError::Unsupported("integration is defined on tori only".into()));
    }
    let dets = vol.det_field();
    let s = neumaier_sum(f.values().iter().zip(&dets).map(|(a, b)| a * b));
    Ok(s * grid.cell_volume())
}
