//! C interface to `cmalab`.
//!
//! Grids and fields are opaque handles created by `cma_*_new`-style calls
//! and released with the matching `*_free`. Every fallible call returns a
//! [`CmaStatus`]; the message of the last failure on the calling thread is
//! available through [`cma_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use cmalab::grid::{read_bin, write_bin, Form11Field, Grid, GridError, ScalarField};
use cmalab::ma::{MaError, MaProblem, RhsSpec};
use cmalab::solver::{dirichlet_solve, torus_calabi_solve, ContinuationSchedule, SolveReport, SolverError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Rejected = 3,
    NotConverged = 4,
    Io = 5,
    Panic = 6,
}

/// Summary of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaSolveInfo {
    pub converged: bool,
    /// Newton iterations over all stages
    pub iterations: usize,
    /// final sup-norm of the log residual
    pub residual: f64,
    /// constant c with which ψ was replaced by cψ, NaN when not applicable
    pub rescale: f64,
    /// whether every post-solve check passed
    pub checks_passed: bool,
}

/// Opaque grid handle.
pub struct CmaGrid(Arc<Grid>);

/// Opaque scalar field handle.
pub struct CmaField(ScalarField);

struct Failure(CmaStatus, String);

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        let status = if matches!(e, GridError::Io(_)) { CmaStatus::Io } else { CmaStatus::InvalidArgument };
        Failure(status, e.to_string())
    }
}

impl From<MaError> for Failure {
    fn from(e: MaError) -> Self {
        Failure(CmaStatus::Rejected, e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let status = if e.is_rejection() { CmaStatus::Rejected } else { CmaStatus::NotConverged };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CmaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            CmaStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(CmaStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CmaStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cma_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the message of the last failure on this thread into `buf`
/// (truncated and NUL-terminated when `cap > 0`). Returns the length the
/// full message needs including the NUL, or 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cma_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let k = (bytes.len() - 1).min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Flat torus of complex dimension `n` with period `period` and `res`
/// points per real axis.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_torus(n: usize, period: f64, res: usize, out: *mut *mut CmaGrid) -> CmaStatus {
    guard(|| put(out, CmaGrid(Arc::new(Grid::torus_uniform(n, period, res)?))))
}

/// Box [lo, hi]^{2n} with `res` intervals per real axis.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_box(n: usize, lo: f64, hi: f64, res: usize, out: *mut *mut CmaGrid) -> CmaStatus {
    guard(|| put(out, CmaGrid(Arc::new(Grid::box_grid(n, &vec![(lo, hi); 2 * n], &vec![res; 2 * n])?))))
}

/// Number of grid points, 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_len(grid: *const CmaGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Complex dimension n, 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_dim(grid: *const CmaGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.n())
}

/// Writes the 2n real coordinates (x₁, y₁, x₂, ...) of point `idx` to `out`.
///
/// # Safety
/// `grid` must be a live grid handle and `out` must point to `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_coords(grid: *const CmaGrid, idx: usize, out: *mut f64, cap: usize) -> CmaStatus {
    guard(|| {
        let g = &deref(grid)?.0;
        if out.is_null() {
            return Err(null());
        }
        if idx >= g.len() {
            return Err(invalid(format!("point {idx} out of range")));
        }
        let x = g.coords(idx);
        if cap < x.len() {
            return Err(invalid(format!("need room for {} coordinates", x.len())));
        }
        std::ptr::copy_nonoverlapping(x.as_ptr(), out, x.len());
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn cma_grid_free(grid: *mut CmaGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Field on `grid` with `len` values in grid order (last axis fastest).
///
/// # Safety
/// `grid` must be a live grid handle, `values` must point to `len` values
/// and `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn cma_field_new(
    grid: *const CmaGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut CmaField,
) -> CmaStatus {
    guard(|| {
        let g = deref(grid)?.0.clone();
        let v = slice(values, len)?.to_vec();
        put(out, CmaField(ScalarField::new(g, v)?))
    })
}

/// Number of values, 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live field handle.
#[no_mangle]
pub unsafe extern "C" fn cma_field_len(field: *const CmaField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copies the values into `out`, which must have room for all of them.
///
/// # Safety
/// `field` must be a live field handle and `out` must point to `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn cma_field_values(field: *const CmaField, out: *mut f64, cap: usize) -> CmaStatus {
    guard(|| {
        let v = deref(field)?.0.values();
        if out.is_null() {
            return Err(null());
        }
        if cap < v.len() {
            return Err(invalid(format!("need room for {} values", v.len())));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
        Ok(())
    })
}

/// New handle to the grid of `field`.
///
/// # Safety
/// `field` must be a live field handle and `out` a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn cma_field_grid(field: *const CmaField, out: *mut *mut CmaGrid) -> CmaStatus {
    guard(|| {
        let g = deref(field)?.0.grid().clone();
        put(out, CmaGrid(g))
    })
}

/// # Safety
/// `field` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn cma_field_free(field: *mut CmaField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Writes `field` in the CMAF binary format.
///
/// # Safety
/// `field` must be a live field handle and `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn cma_field_write(field: *const CmaField, file: *const c_char) -> CmaStatus {
    guard(|| {
        let f = &deref(field)?.0;
        Ok(write_bin(f, path(file)?)?)
    })
}

/// Reads a CMAF binary file.
///
/// # Safety
/// `file` must be a NUL-terminated path and `out` a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn cma_field_read(file: *const c_char, out: *mut *mut CmaField) -> CmaStatus {
    guard(|| {
        let f = read_bin(path(file)?)?;
        put(out, CmaField(f))
    })
}

fn info(rep: &SolveReport) -> CmaSolveInfo {
    CmaSolveInfo {
        converged: rep.converged,
        iterations: rep.stages.iter().map(|s| s.iterations).sum(),
        residual: rep.final_residual,
        rescale: rep.rescale.unwrap_or(f64::NAN),
        checks_passed: rep.all_checks_pass(),
    }
}

unsafe fn finish(
    u: ScalarField,
    rep: &SolveReport,
    out: *mut *mut CmaField,
    out_info: *mut CmaSolveInfo,
) -> Result<(), Failure> {
    if let Some(i) = out_info.as_mut() {
        *i = info(rep);
    }
    put(out, CmaField(u))?;
    if !rep.converged {
        return Err(Failure(
            CmaStatus::NotConverged,
            rep.message.clone().unwrap_or_else(|| "no convergence".into()),
        ));
    }
    Ok(())
}

/// Solves det(ω + ∂∂̄u) = c ψ ωⁿ with ∫u ωⁿ = 0 on a torus grid, ω flat,
/// for u-independent samples `psi ≥ 0`. On `CMA_STATUS_NOT_CONVERGED` the
/// last iterate is still returned in `out`.
///
/// # Safety
/// `grid` must be a live torus grid handle, `psi` must point to `len`
/// values, `out` must be a valid handle slot and `out_info` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cma_solve_torus(
    grid: *const CmaGrid,
    psi: *const f64,
    len: usize,
    out: *mut *mut CmaField,
    out_info: *mut CmaSolveInfo,
) -> CmaStatus {
    guard(|| {
        let g = deref(grid)?.0.clone();
        let psi = slice(psi, len)?;
        if len != g.len() {
            return Err(invalid(format!("ψ has {len} values for {} grid points", g.len())));
        }
        let id = Form11Field::identity(g);
        let prob = MaProblem::closed(id.clone(), id, RhsSpec::field(psi.to_vec()))?;
        let (u, rep) = torus_calabi_solve(&prob, &ContinuationSchedule::default())?;
        finish(u, &rep, out, out_info)
    })
}

/// Solves det(ω + ∂∂̄u) = ψ ωⁿ on a box grid with u = `boundary` on the
/// boundary, started from the strict subsolution `subsolution`, ω flat.
/// On `CMA_STATUS_NOT_CONVERGED` the last iterate is still returned.
///
/// # Safety
/// `boundary` and `subsolution` must be live field handles on the same box
/// grid, `psi` must point to `len` values, `out` must be a valid handle
/// slot and `out_info` null or writable.
#[no_mangle]
pub unsafe extern "C" fn cma_solve_dirichlet(
    boundary: *const CmaField,
    subsolution: *const CmaField,
    psi: *const f64,
    len: usize,
    out: *mut *mut CmaField,
    out_info: *mut CmaSolveInfo,
) -> CmaStatus {
    guard(|| {
        let bd = &deref(boundary)?.0;
        let sub = &deref(subsolution)?.0;
        let psi = slice(psi, len)?;
        let g = bd.grid().clone();
        if len != g.len() {
            return Err(invalid(format!("ψ has {len} values for {} grid points", g.len())));
        }
        let id = Form11Field::identity(g);
        let prob = MaProblem::dirichlet(id.clone(), id, RhsSpec::field(psi.to_vec()), bd.clone(), Some(sub.clone()))?;
        let (u, rep) = dirichlet_solve(&prob, &ContinuationSchedule::default())?;
        finish(u, &rep, out, out_info)
    })
}
