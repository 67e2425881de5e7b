//! Small dense complex matrices (n <= 4) used per grid point and per jet.
//!
//! Everything here is allocation free so that point sweeps over millions of
//! grid points stay cheap.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Largest complex dimension supported by the fixed-size kernels.
pub const MAX_N: usize = 4;

/// Condition-number guard for inversions of metric matrices.
pub const COND_LIMIT: f64 = 1e12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major n x n complex matrix with inline storage.
#[derive(Clone, Copy, PartialEq)]
pub struct SmallMat {
    n: usize,
    a: [C64; MAX_N * MAX_N],
}

impl std::fmt::Debug for SmallMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<Vec<C64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)]).collect())
            .collect();
        f.debug_struct("SmallMat").field("n", &self.n).field("rows", &rows).finish()
    }
}

impl std::ops::Index<(usize, usize)> for SmallMat {
    type Output = C64;
    #[inline(always)]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * MAX_N + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SmallMat {
    #[inline(always)]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * MAX_N + j]
    }
}

/// Failure modes of the small-matrix kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallMatError {
    Singular,
    IllConditioned(f64),
    NotPositiveDefinite,
}

impl SmallMat {
    #[inline]
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_N, "matrix dimension {n} out of range");
        SmallMat { n, a: [ZERO; MAX_N * MAX_N] }
    }

    #[inline]
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Real diagonal matrix.
    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    #[inline(always)]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] *= s;
            }
        }
        m
    }

    pub fn add(&self, other: &SmallMat) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] += other[(i, j)];
            }
        }
        m
    }

    pub fn sub(&self, other: &SmallMat) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &SmallMat) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                for j in 0..n {
                    m[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self[(i, j)].norm());
            }
        }
        m
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// tr(self * other), computed without forming the product.
    #[inline]
    pub fn trace_product(&self, other: &SmallMat) -> C64 {
        let n = self.n;
        let mut s = ZERO;
        for i in 0..n {
            for k in 0..n {
                s += self[(i, k)] * other[(k, i)];
            }
        }
        s
    }

    fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting. Returns the packed factors,
    /// the row permutation and the permutation sign.
    fn lu(&self) -> (SmallMat, [usize; MAX_N], f64, bool) {
        let n = self.n;
        let mut lu = *self;
        let mut perm = [0usize; MAX_N];
        for (i, p) in perm.iter_mut().enumerate().take(n) {
            *p = i;
        }
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].norm();
            for i in k + 1..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if piv != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let inv = ONE / lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] * inv;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let t = lu[(k, j)];
                    lu[(i, j)] -= f * t;
                }
            }
        }
        (lu, perm, sign, singular)
    }

    /// Determinant by pivoted elimination.
    pub fn det(&self) -> C64 {
        match self.n {
            1 => self[(0, 0)],
            2 => self[(0, 0)] * self[(1, 1)] - self[(0, 1)] * self[(1, 0)],
            _ => {
                let (lu, _, sign, singular) = self.lu();
                if singular {
                    return ZERO;
                }
                let mut d = C64::new(sign, 0.0);
                for i in 0..self.n {
                    d *= lu[(i, i)];
                }
                d
            }
        }
    }

    /// Inverse through pivoted LU, rejecting matrices whose 1-norm condition
    /// number exceeds [`COND_LIMIT`].
    pub fn inverse(&self) -> Result<SmallMat, SmallMatError> {
        let n = self.n;
        let (lu, perm, _, singular) = self.lu();
        if singular {
            return Err(SmallMatError::Singular);
        }
        let mut inv = Self::zeros(n);
        for col in 0..n {
            // forward substitution on the permuted unit vector
            let mut y = [ZERO; MAX_N];
            for i in 0..n {
                let mut s = if perm[i] == col { ONE } else { ZERO };
                for (k, yk) in y.iter().enumerate().take(i) {
                    s -= lu[(i, k)] * yk;
                }
                y[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= lu[(i, k)] * inv[(k, col)];
                }
                inv[(i, col)] = s / lu[(i, i)];
            }
        }
        let cond = self.one_norm() * inv.one_norm();
        if !cond.is_finite() || cond > COND_LIMIT {
            return Err(SmallMatError::IllConditioned(cond));
        }
        Ok(inv)
    }

    /// Lower Cholesky factor L with self = L L^*. Only the lower triangle is read.
    #[inline]
    pub fn cholesky(&self) -> Result<SmallMat, SmallMatError> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(SmallMatError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix.
    pub fn lower_inverse(&self) -> SmallMat {
        let n = self.n;
        let mut inv = Self::zeros(n);
        for j in 0..n {
            inv[(j, j)] = ONE / self[(j, j)];
            for i in j + 1..n {
                let mut s = ZERO;
                for k in j..i {
                    s -= self[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = s / self[(i, i)];
            }
        }
        inv
    }

    /// Eigenvalues of a Hermitian matrix in ascending order (cyclic Jacobi for
    /// n >= 3, closed form below).
    pub fn hermitian_eigenvalues(&self) -> [f64; MAX_N] {
        let n = self.n;
        let mut out = [f64::INFINITY; MAX_N];
        match n {
            1 => out[0] = self[(0, 0)].re,
            2 => {
                let a = self[(0, 0)].re;
                let d = self[(1, 1)].re;
                let b = self[(0, 1)].norm();
                let mid = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                out[0] = mid - rad;
                out[1] = mid + rad;
            }
            _ => {
                let mut m = *self;
                for _sweep in 0..64 {
                    let mut off = 0.0;
                    for p in 0..n {
                        for q in p + 1..n {
                            off += m[(p, q)].norm_sqr();
                        }
                    }
                    let scale: f64 = (0..n).map(|i| m[(i, i)].re.abs()).sum::<f64>() + 1e-300;
                    if off.sqrt() <= 1e-16 * scale {
                        break;
                    }
                    for p in 0..n {
                        for q in p + 1..n {
                            jacobi_rotate(&mut m, p, q);
                        }
                    }
                }
                for (i, o) in out.iter_mut().enumerate().take(n) {
                    *o = m[(i, i)].re;
                }
                out[..n].sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
        }
        out
    }

    /// Smallest eigenvalue of B^{-1} A for Hermitian A and positive definite B.
    pub fn generalized_min_eigenvalue(a: &SmallMat, b: &SmallMat) -> Result<f64, SmallMatError> {
        let l = b.cholesky()?;
        let li = l.lower_inverse();
        let c = li.mul(a).mul(&li.adjoint());
        Ok(c.hermitian_eigenvalues()[0])
    }
}

/// One complex Jacobi rotation zeroing the (p, q) entry of a Hermitian matrix.
fn jacobi_rotate(m: &mut SmallMat, p: usize, q: usize) {
    let apq = m[(p, q)];
    let abs = apq.norm();
    if abs < 1e-300 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let phase = apq / abs;
    let theta = 0.5 * (2.0 * abs).atan2(aqq - app);
    let (s, c) = theta.sin_cos();
    // Columns: v_p = c e_p - s conj(phase) e_q, v_q = s phase e_p + c e_q
    let n = m.dim();
    let mut rot = SmallMat::identity(n);
    rot[(p, p)] = C64::new(c, 0.0);
    rot[(q, q)] = C64::new(c, 0.0);
    rot[(p, q)] = phase * s;
    rot[(q, p)] = -phase.conj() * s;
    let next = rot.adjoint().mul(m).mul(&rot);
    *m = next;
    // enforce exact Hermitian structure after the update
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Packed Hermitian storage: n real diagonal entries followed by the strict
/// upper triangle as (re, im) pairs, n^2 reals in total.
#[inline]
pub fn pack_hermitian(m: &SmallMat, out: &mut [f64]) {
    let n = m.dim();
    debug_assert_eq!(out.len(), n * n);
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            out[k] = m[(i, j)].re;
            out[k + 1] = m[(i, j)].im;
            k += 2;
        }
    }
}

#[inline]
pub fn unpack_hermitian(n: usize, data: &[f64]) -> SmallMat {
    let mut m = SmallMat::zeros(n);
    for i in 0..n {
        m[(i, i)] = C64::new(data[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let v = C64::new(data[k], data[k + 1]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            k += 2;
        }
    }
    m
}

/// tr(P H) for Hermitian P given packed and Hermitian H given as a full
/// matrix; the result is real.
#[inline]
pub fn packed_trace_product(n: usize, packed: &[f64], h: &SmallMat) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        s += packed[i] * h[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            // P_ij H_ji + P_ji H_ij = 2 Re(P_ij H_ji)
            let p = C64::new(packed[k], packed[k + 1]);
            s += 2.0 * (p * h[(j, i)]).re;
            k += 2;
        }
    }
    s
}
