//! Linear solves with the linearized operator: sparse LU for small grids,
//! preconditioned BiCGSTAB otherwise.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::grid::{neumaier_sum, AxisKind, Grid};
use crate::ma::LinearizedOperator;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("iterative solve stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Grids with at most this many unknowns and at most three active axes are
/// solved directly.
pub const DIRECT_LIMIT: usize = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// direct when the grid is small enough, iterative otherwise
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub direct: bool,
}

const CHUNK: usize = 1 << 12;

/// Dot product with a fixed reduction tree, independent of the thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    neumaier_sum(parts)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mean(a: &[f64]) -> f64 {
    let parts: Vec<f64> = a.par_chunks(CHUNK).map(|x| x.iter().sum::<f64>()).collect();
    neumaier_sum(parts) / a.len() as f64
}

/// y = a x + y
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += a * x);
}

/// Solves L x = b where L acts as the identity on boundary rows, so the
/// solution takes the boundary values of `b`.
///
/// With `bordered`, solves instead the system
/// `L x - s = b`, `mean(x) = 0` for the unknown constant `s`, returned
/// alongside `x`; this is the form used on closed grids when L has no
/// zeroth-order term.
pub fn solve(
    op: &LinearizedOperator,
    b: &[f64],
    bordered: bool,
    method: Method,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, LinearStats), LinSolveError> {
    let grid = op.grid();
    let mask = op.boundary_mask();
    // move boundary values to the right-hand side
    let has_bd = mask.iter().zip(b).any(|(m, v)| *m && *v != 0.0);
    let lift: Vec<f64> = if has_bd {
        b.iter().zip(mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect()
    } else {
        Vec::new()
    };
    let rhs: Vec<f64> = if has_bd {
        let mut al = vec![0.0; b.len()];
        op.apply(&lift, &mut al);
        b.iter().zip(&al).zip(mask).map(|((b, a), m)| if *m { 0.0 } else { b - a }).collect()
    } else {
        b.iter().zip(mask).map(|(b, m)| if *m { 0.0 } else { *b }).collect()
    };
    let active = grid.axes().iter().filter(|a| a.active()).count();
    let use_direct = match method {
        Method::Auto => active <= 3 && grid.interior_count() <= DIRECT_LIMIT,
        Method::Direct => true,
        Method::Iterative => false,
    };
    let (mut x, s, stats) = if use_direct {
        direct(op, &rhs, bordered)?
    } else {
        iterative(op, &rhs, bordered, rel_tol, max_iter)?
    };
    if has_bd {
        x.iter_mut().zip(&lift).for_each(|(x, l)| *x += l);
    }
    Ok((x, s, stats))
}

fn direct(op: &LinearizedOperator, b: &[f64], bordered: bool) -> Result<(Vec<f64>, f64, LinearStats), LinSolveError> {
    let (num, count) = op.numbering();
    let mut trip: Vec<Triplet<usize, usize, f64>> =
        op.triplets(&num).into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let dim = if bordered { count + 1 } else { count };
    if bordered {
        let w = 1.0 / count as f64;
        for k in 0..count {
            trip.push(Triplet::new(k, count, -1.0));
            trip.push(Triplet::new(count, k, w));
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &trip)
        .map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?;
    let mut rhs = Mat::<f64>::zeros(dim, 1);
    for (i, n) in num.iter().enumerate() {
        if let Some(k) = n {
            rhs[(*k, 0)] = b[i];
        }
    }
    lu.solve_in_place(rhs.as_mut());
    let mut x = vec![0.0; b.len()];
    for (i, n) in num.iter().enumerate() {
        if let Some(k) = n {
            x[i] = rhs[(*k, 0)];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinSolveError::Factorization("non-finite solution".into()));
    }
    let s = if bordered { rhs[(count, 0)] } else { 0.0 };
    let mut ax = vec![0.0; b.len()];
    op.apply(&x, &mut ax);
    if bordered {
        ax.iter_mut().zip(op.boundary_mask()).for_each(|(v, m)| if !m { *v -= s });
    }
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    let rel = norm(&r) / norm(b).max(f64::MIN_POSITIVE);
    Ok((x, s, LinearStats { iterations: 1, relative_residual: rel, direct: true }))
}

fn iterative(
    op: &LinearizedOperator,
    b: &[f64],
    bordered: bool,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, LinearStats), LinSolveError> {
    let len = b.len();
    let (diag, zeroth) = op.mean_coefficients();
    let pre = FastInverse::new(op.grid(), &diag, zeroth);
    let mask = op.boundary_mask();
    if !bordered {
        let apply = |x: &[f64], y: &mut [f64]| op.apply(x, y);
        let prec = |r: &[f64], z: &mut [f64]| pre.apply(r, z);
        let (x, stats) = bicgstab(len, apply, prec, b, rel_tol, max_iter)?;
        return Ok((x, 0.0, stats));
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        op.apply(&x[..len], &mut y[..len]);
        let s = x[len];
        y[..len].par_iter_mut().zip(mask.par_iter()).for_each(|(v, m)| if !m { *v -= s });
        y[len] = mean(&x[..len]);
    };
    let prec = |r: &[f64], z: &mut [f64]| {
        // the preconditioner drops the constant mode, so P⁺(r - mean r) = P⁺ r
        let m = mean(&r[..len]);
        pre.apply(&r[..len], &mut z[..len]);
        let zm = mean(&z[..len]);
        let beta = r[len];
        z[..len].par_iter_mut().for_each(|v| *v += beta - zm);
        z[len] = -m;
    };
    let mut bb = b.to_vec();
    bb.push(0.0);
    let (x, stats) = bicgstab(len + 1, apply, prec, &bb, rel_tol, max_iter)?;
    let s = x[len];
    let mut x = x;
    x.truncate(len);
    Ok((x, s, stats))
}

/// Right-preconditioned BiCGSTAB from a zero initial guess.
pub fn bicgstab(
    len: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, LinearStats), LinSolveError> {
    let bn = norm(b);
    let mut x = vec![0.0; len];
    if bn == 0.0 {
        return Ok((x, LinearStats::default()));
    }
    let target = rel_tol * bn;
    let mut r = b.to_vec();
    let mut rhat = r.clone();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut phat = vec![0.0; len];
    let mut shat = vec![0.0; len];
    let mut t = vec![0.0; len];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut rn = bn;
    for it in 1..=max_iter {
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // restart with the current residual as shadow vector
            rhat.copy_from_slice(&r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
        precond(&p, &mut phat);
        apply(&phat, &mut v);
        let rv = dot(&rhat, &v);
        if rv == 0.0 {
            rhat.copy_from_slice(&r);
            rho = 1.0;
            continue;
        }
        alpha = rho / rv;
        // r becomes s
        axpy(-alpha, &v, &mut r);
        axpy(alpha, &phat, &mut x);
        let sn = norm(&r);
        if sn <= target {
            return Ok((x, LinearStats { iterations: it, relative_residual: sn / bn, direct: false }));
        }
        precond(&r, &mut shat);
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        axpy(omega, &shat, &mut x);
        axpy(-omega, &t, &mut r);
        rn = norm(&r);
        if rn <= target {
            return Ok((x, LinearStats { iterations: it, relative_residual: rn / bn, direct: false }));
        }
        if !rn.is_finite() {
            break;
        }
    }
    Err(LinSolveError::NoConvergence { iterations: max_iter, residual: rn / bn })
}

enum AxisTransform {
    /// complex FFT over all points of a periodic axis
    Periodic { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
    /// DST-I on the interior points of a Dirichlet axis, through an FFT of
    /// the odd extension
    Sine { fft: Arc<dyn Fft<f64>> },
    None,
}

/// Exact inverse of the constant-coefficient operator
/// `Σ_a c_a D_aa - c0` on the grid (identity on boundary points). On closed
/// grids without zeroth-order term the constant mode is mapped to zero.
pub struct FastInverse {
    grid: Arc<Grid>,
    /// compact shape: periodic axes keep all points, Dirichlet axes their interior
    shape: Vec<usize>,
    transforms: Vec<AxisTransform>,
    inv_symbol: Vec<f64>,
}

impl FastInverse {
    pub fn new(grid: &Arc<Grid>, coef: &[f64], zeroth: f64) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let mut shape = Vec::new();
        let mut transforms = Vec::new();
        let mut eig: Vec<Vec<f64>> = Vec::new();
        let mut scale = 1.0;
        for (a, ax) in grid.axes().iter().enumerate() {
            match ax.kind {
                AxisKind::Periodic => {
                    let n = ax.points();
                    let h = ax.h();
                    shape.push(n);
                    transforms.push(AxisTransform::Periodic {
                        fwd: planner.plan_fft_forward(n),
                        inv: planner.plan_fft_inverse(n),
                    });
                    eig.push(
                        (0..n)
                            .map(|k| -4.0 * coef[a] * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2) / (h * h))
                            .collect(),
                    );
                    scale /= n as f64;
                }
                AxisKind::Dirichlet => {
                    let m = ax.res - 1;
                    let h = ax.h();
                    shape.push(m);
                    transforms.push(AxisTransform::Sine { fft: planner.plan_fft_forward(2 * ax.res) });
                    eig.push(
                        (1..=m)
                            .map(|k| {
                                -4.0 * coef[a] * (std::f64::consts::PI * k as f64 / (2 * ax.res) as f64).sin().powi(2)
                                    / (h * h)
                            })
                            .collect(),
                    );
                    scale *= 2.0 / ax.res as f64;
                }
                AxisKind::Frozen => {
                    shape.push(1);
                    transforms.push(AxisTransform::None);
                    eig.push(vec![0.0]);
                }
            }
        }
        let total: usize = shape.iter().product();
        let mut inv_symbol = vec![0.0; total];
        let mut m = vec![0usize; shape.len()];
        let mut biggest = zeroth.abs();
        for e in &eig {
            biggest += e.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        }
        for s in inv_symbol.iter_mut() {
            let sym: f64 = m.iter().enumerate().map(|(a, &k)| eig[a][k]).sum::<f64>() - zeroth;
            *s = if sym.abs() <= 1e-13 * biggest { 0.0 } else { scale / sym };
            for a in (0..m.len()).rev() {
                m[a] += 1;
                if m[a] < shape[a] {
                    break;
                }
                m[a] = 0;
            }
        }
        FastInverse { grid: grid.clone(), shape, transforms, inv_symbol }
    }

    fn compact_index(&self, mg: &[usize]) -> Option<usize> {
        let mut k = 0;
        for (a, ax) in self.grid.axes().iter().enumerate() {
            let i = match ax.kind {
                AxisKind::Dirichlet => {
                    if mg[a] == 0 || mg[a] == ax.res {
                        return None;
                    }
                    mg[a] - 1
                }
                _ => mg[a],
            };
            k = k * self.shape[a] + i;
        }
        Some(k)
    }

    fn transform_axes(&self, buf: &mut [Complex<f64>], forward: bool) {
        let total = buf.len();
        for (a, tr) in self.transforms.iter().enumerate() {
            let n = self.shape[a];
            if n == 1 {
                continue;
            }
            let inner: usize = self.shape[a + 1..].iter().product();
            let outer = total / (n * inner);
            let mut line = vec![Complex::new(0.0, 0.0); n];
            let mut ext = match tr {
                AxisTransform::Sine { .. } => vec![Complex::new(0.0, 0.0); 2 * (n + 1)],
                _ => Vec::new(),
            };
            for o in 0..outer {
                for i in 0..inner {
                    let start = o * n * inner + i;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = buf[start + j * inner];
                    }
                    match tr {
                        AxisTransform::Periodic { fwd, inv } => {
                            if forward {
                                fwd.process(&mut line)
                            } else {
                                inv.process(&mut line)
                            }
                        }
                        AxisTransform::Sine { fft } => {
                            let res = n + 1;
                            ext[0] = Complex::new(0.0, 0.0);
                            ext[res] = Complex::new(0.0, 0.0);
                            for j in 1..res {
                                ext[j] = line[j - 1];
                                ext[2 * res - j] = -line[j - 1];
                            }
                            fft.process(&mut ext);
                            for k in 1..res {
                                line[k - 1] = Complex::new(0.0, 0.5) * ext[k];
                            }
                        }
                        AxisTransform::None => {}
                    }
                    for (j, l) in line.iter().enumerate() {
                        buf[start + j * inner] = *l;
                    }
                }
            }
        }
    }

    /// z = M^{-1} r; boundary entries are copied.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let grid = &self.grid;
        let d = grid.axes().len();
        if !grid.has_boundary() {
            let mut buf: Vec<Complex<f64>> = r.par_iter().map(|v| Complex::new(*v, 0.0)).collect();
            self.transform_axes(&mut buf, true);
            buf.par_iter_mut().zip(self.inv_symbol.par_iter()).for_each(|(b, s)| *b *= *s);
            self.transform_axes(&mut buf, false);
            z.par_iter_mut().zip(buf.par_iter()).for_each(|(z, b)| *z = b.re);
            return;
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.inv_symbol.len()];
        let mut m = vec![0usize; d];
        for idx in 0..grid.len() {
            grid.multi_index(idx, &mut m);
            match self.compact_index(&m) {
                Some(k) => buf[k] = Complex::new(r[idx], 0.0),
                None => z[idx] = r[idx],
            }
        }
        self.transform_axes(&mut buf, true);
        buf.par_iter_mut().zip(self.inv_symbol.par_iter()).for_each(|(b, s)| *b *= *s);
        self.transform_axes(&mut buf, false);
        for idx in 0..grid.len() {
            grid.multi_index(idx, &mut m);
            if let Some(k) = self.compact_index(&m) {
                z[idx] = buf[k].re;
            }
        }
    }
}
