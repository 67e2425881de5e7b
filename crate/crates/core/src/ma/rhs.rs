use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::MaError;

/// Right-hand side ψ(z, u) ≥ 0, evaluated per grid point.
#[derive(Clone)]
pub enum Psi {
    Constant(f64),
    /// u-independent samples ψ(z).
    Field(Arc<Vec<f64>>),
    /// e^u f(z).
    ExpTimes(Arc<Vec<f64>>),
    /// (1 - s) e^u + s ψ(z, u).
    Blend { s: f64, inner: Box<Psi> },
    /// c ψ(z, u).
    Scaled { c: f64, inner: Box<Psi> },
    /// ψ^ε built from ψ with floor level `e` = ε^n; see [`regularize`].
    Regularized { e: f64, inner: Box<Psi> },
}

impl fmt::Debug for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psi::Constant(c) => write!(f, "Constant({c})"),
            Psi::Field(v) => write!(f, "Field(<{} values>)", v.len()),
            Psi::ExpTimes(v) => write!(f, "ExpTimes(<{} values>)", v.len()),
            Psi::Blend { s, inner } => write!(f, "Blend(s = {s}, {inner:?})"),
            Psi::Scaled { c, inner } => write!(f, "Scaled({c}, {inner:?})"),
            Psi::Regularized { e, inner } => write!(f, "Regularized(e = {e}, {inner:?})"),
        }
    }
}

impl Psi {
    /// (ψ, ∂ψ/∂u) at grid point `idx` for the value `u`.
    #[inline]
    pub fn eval(&self, idx: usize, u: f64) -> (f64, f64) {
        match self {
            Psi::Constant(c) => (*c, 0.0),
            Psi::Field(v) => (v[idx], 0.0),
            Psi::ExpTimes(v) => {
                let p = u.exp() * v[idx];
                (p, p)
            }
            Psi::Blend { s, inner } => {
                let (p, pu) = inner.eval(idx, u);
                let e = u.exp();
                ((1.0 - s) * e + s * p, (1.0 - s) * e + s * pu)
            }
            Psi::Scaled { c, inner } => {
                let (p, pu) = inner.eval(idx, u);
                (c * p, c * pu)
            }
            Psi::Regularized { e, inner } => {
                let (p, pu) = inner.eval(idx, u);
                if p >= *e {
                    (p, pu)
                } else {
                    // e q(p/e) with q(r) = (1 + r^2)/2: C^1 at r = 1, increasing in p and in e
                    ((e * e + p * p) / (2.0 * e), p / e * pu)
                }
            }
        }
    }

    fn sample_len(&self) -> Option<usize> {
        match self {
            Psi::Constant(_) => None,
            Psi::Field(v) | Psi::ExpTimes(v) => Some(v.len()),
            Psi::Blend { inner, .. } | Psi::Scaled { inner, .. } | Psi::Regularized { inner, .. } => {
                inner.sample_len()
            }
        }
    }

    /// Whether ψ does not depend on u.
    pub fn u_independent(&self) -> bool {
        match self {
            Psi::Constant(_) | Psi::Field(_) => true,
            Psi::ExpTimes(_) | Psi::Blend { .. } => false,
            Psi::Scaled { inner, .. } | Psi::Regularized { inner, .. } => inner.u_independent(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RhsFlags {
    /// ψ may vanish.
    pub degenerate: bool,
    /// ψ_u ≥ 0.
    pub monotone: bool,
    /// ψ_u > 0.
    pub strict_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct RhsSpec {
    pub psi: Psi,
    pub flags: RhsFlags,
}

impl RhsSpec {
    pub fn new(psi: Psi, flags: RhsFlags) -> Self {
        RhsSpec { psi, flags }
    }

    /// u-independent constant ψ.
    pub fn constant(c: f64) -> Self {
        RhsSpec::new(Psi::Constant(c), RhsFlags { degenerate: c == 0.0, monotone: true, strict_monotone: false })
    }

    /// u-independent sampled ψ(z).
    pub fn field(values: Vec<f64>) -> Self {
        let degenerate = values.iter().any(|v| *v <= 0.0);
        RhsSpec::new(Psi::Field(Arc::new(values)), RhsFlags { degenerate, monotone: true, strict_monotone: false })
    }

    /// ψ = e^u f(z) with f > 0.
    pub fn exp_times(f: Vec<f64>) -> Self {
        RhsSpec::new(
            Psi::ExpTimes(Arc::new(f)),
            RhsFlags { degenerate: false, monotone: true, strict_monotone: true },
        )
    }

    #[inline]
    pub fn eval(&self, idx: usize, u: f64) -> (f64, f64) {
        self.psi.eval(idx, u)
    }

    /// (log ψ, ψ_u / ψ), defined where ψ > 0.
    #[inline]
    pub fn log_eval(&self, idx: usize, u: f64) -> Option<(f64, f64)> {
        let (p, pu) = self.psi.eval(idx, u);
        if p > 0.0 {
            Some((p.ln(), pu / p))
        } else {
            None
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<(), MaError> {
        match self.psi.sample_len() {
            Some(l) if l != len => Err(MaError::Invalid(format!("ψ has {l} samples for {len} points"))),
            _ => Ok(()),
        }
    }

    /// Samples ψ at every point for each u in `u_values` and checks
    /// nonnegativity and the declared monotonicity flags.
    pub fn validate(&self, len: usize, u_values: &[f64]) -> Result<(), MaError> {
        self.check_len(len)?;
        for idx in 0..len {
            for &u in u_values {
                let (p, pu) = self.eval(idx, u);
                if !(p >= 0.0) {
                    return Err(MaError::RhsFlags(format!("ψ = {p} < 0 at point {idx}, u = {u}")));
                }
                if !self.flags.degenerate && p == 0.0 {
                    return Err(MaError::RhsFlags(format!("ψ vanishes at point {idx} but is not flagged degenerate")));
                }
                if self.flags.monotone && pu < 0.0 {
                    return Err(MaError::RhsFlags(format!("ψ_u = {pu} < 0 at point {idx}, u = {u}")));
                }
                if self.flags.strict_monotone && !(pu > 0.0) {
                    return Err(MaError::RhsFlags(format!("ψ_u = {pu} is not positive at point {idx}, u = {u}")));
                }
            }
        }
        Ok(())
    }

    /// The continuation right-hand side (1 - s) e^u + s ψ.
    pub fn blend(&self, s: f64) -> RhsSpec {
        RhsSpec::new(
            Psi::Blend { s, inner: Box::new(self.psi.clone()) },
            RhsFlags { degenerate: false, monotone: true, strict_monotone: self.flags.monotone },
        )
    }

    pub fn scaled(&self, c: f64) -> RhsSpec {
        RhsSpec::new(Psi::Scaled { c, inner: Box::new(self.psi.clone()) }, self.flags)
    }
}

/// ψ^ε for complex dimension `n`: equal to ψ where ψ ≥ ε^n and to
/// (ε^{2n} + ψ^2) / (2 ε^n) below, so that
/// `max(ψ - ε, ε^n / 2) ≤ ψ^ε ≤ max(ψ, ε^n)` and ψ^ε is nondecreasing in ε.
pub fn regularize(spec: &RhsSpec, eps: f64, n: usize) -> RhsSpec {
    let e = eps.powi(n as i32);
    RhsSpec::new(
        Psi::Regularized { e, inner: Box::new(spec.psi.clone()) },
        RhsFlags { degenerate: false, ..spec.flags },
    )
}
