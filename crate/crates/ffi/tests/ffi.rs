use std::ffi::CString;
use std::ptr;

use cmalab_ffi::*;

fn last_error() -> String {
    let n = unsafe { cma_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; n.max(1)];
    unsafe { cma_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn torus(n: usize, res: usize) -> *mut CmaGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cma_grid_torus(n, 2.0 * std::f64::consts::PI, res, &mut g) }, CmaStatus::Ok);
    g
}

fn values(f: *const CmaField) -> Vec<f64> {
    let len = unsafe { cma_field_len(f) };
    let mut v = vec![0.0; len];
    assert_eq!(unsafe { cma_field_values(f, v.as_mut_ptr(), len) }, CmaStatus::Ok);
    v
}

#[test]
fn grid_handles_report_shape_and_coordinates() {
    let g = torus(2, 8);
    assert_eq!(unsafe { cma_grid_len(g) }, 4096);
    assert_eq!(unsafe { cma_grid_dim(g) }, 2);
    let mut x = [0.0; 4];
    assert_eq!(unsafe { cma_grid_coords(g, 1, x.as_mut_ptr(), 4) }, CmaStatus::Ok);
    assert_eq!(x, [0.0, 0.0, 0.0, 2.0 * std::f64::consts::PI / 8.0]);
    assert_eq!(unsafe { cma_grid_coords(g, 1, x.as_mut_ptr(), 3) }, CmaStatus::InvalidArgument);
    assert_eq!(unsafe { cma_grid_coords(g, 4096, x.as_mut_ptr(), 4) }, CmaStatus::InvalidArgument);
    assert_eq!(unsafe { cma_grid_len(ptr::null()) }, 0);
    unsafe { cma_grid_free(g) };
    unsafe { cma_grid_free(ptr::null_mut()) };
}

#[test]
fn invalid_grids_are_rejected_with_a_message() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cma_grid_torus(1, 1.0, 4, &mut g) }, CmaStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { cma_grid_box(9, -1.0, 1.0, 8, &mut g) }, CmaStatus::InvalidArgument);
    assert_eq!(unsafe { cma_grid_torus(1, 1.0, 8, ptr::null_mut()) }, CmaStatus::NullPointer);
    assert_eq!(last_error(), "null pointer argument");
    let ok = torus(1, 8);
    assert_eq!(unsafe { cma_last_error(ptr::null_mut(), 0) }, 0);
    unsafe { cma_grid_free(ok) };
}

#[test]
fn field_round_trip_through_file() {
    let g = torus(1, 8);
    let v: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { cma_field_new(g, v.as_ptr(), v.len(), &mut f) }, CmaStatus::Ok);
    assert_eq!(unsafe { cma_field_new(g, v.as_ptr(), 10, &mut f) }, CmaStatus::InvalidArgument);
    let tmp = tempfile::TempDir::new().unwrap();
    let path = CString::new(tmp.path().join("f.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cma_field_write(f, path.as_ptr()) }, CmaStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { cma_field_read(path.as_ptr(), &mut back) }, CmaStatus::Ok);
    assert_eq!(values(back), v);
    let mut g2 = ptr::null_mut();
    assert_eq!(unsafe { cma_field_grid(back, &mut g2) }, CmaStatus::Ok);
    assert_eq!(unsafe { cma_grid_len(g2) }, 64);
    let missing = CString::new(tmp.path().join("none.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cma_field_read(missing.as_ptr(), &mut back) }, CmaStatus::Io);
    unsafe {
        cma_field_free(f);
        cma_field_free(back);
        cma_grid_free(g);
        cma_grid_free(g2);
    }
}

#[test]
fn torus_solve_recovers_the_rescaling() {
    let g = torus(2, 8);
    let psi = vec![3.0; 4096];
    let mut u = ptr::null_mut();
    let mut info = CmaSolveInfo { converged: false, iterations: 0, residual: 0.0, rescale: 0.0, checks_passed: false };
    assert_eq!(unsafe { cma_solve_torus(g, psi.as_ptr(), psi.len(), &mut u, &mut info) }, CmaStatus::Ok);
    assert!(info.converged && info.checks_passed);
    assert!((info.rescale - 1.0 / 3.0).abs() < 1e-12);
    assert!(values(u).iter().all(|v| v.abs() < 1e-12));
    let neg = vec![-1.0; 4096];
    assert_eq!(unsafe { cma_solve_torus(g, neg.as_ptr(), neg.len(), &mut u, &mut info) }, CmaStatus::Rejected);
    unsafe {
        cma_field_free(u);
        cma_grid_free(g);
    }
}

#[test]
fn dirichlet_solve_matches_quadratic() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cma_grid_box(1, -1.0, 1.0, 16, &mut g) }, CmaStatus::Ok);
    let len = unsafe { cma_grid_len(g) };
    let mut exact = Vec::with_capacity(len);
    let mut sub = Vec::with_capacity(len);
    let mut x = [0.0; 2];
    for i in 0..len {
        assert_eq!(unsafe { cma_grid_coords(g, i, x.as_mut_ptr(), 2) }, CmaStatus::Ok);
        let r2 = x[0] * x[0] + x[1] * x[1];
        exact.push(r2);
        sub.push(r2 - 0.1 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
    }
    // det(1 + ∂∂̄|z|²) = 2 with ω flat
    let psi = vec![2.0; len];
    let (mut bd, mut sb, mut u) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(cma_field_new(g, exact.as_ptr(), len, &mut bd), CmaStatus::Ok);
        assert_eq!(cma_field_new(g, sub.as_ptr(), len, &mut sb), CmaStatus::Ok);
        assert_eq!(cma_solve_dirichlet(bd, sb, psi.as_ptr(), len, &mut u, ptr::null_mut()), CmaStatus::Ok, "{}", last_error());
    }
    let got = values(u);
    let err = got.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    unsafe {
        assert_eq!(cma_solve_dirichlet(bd, ptr::null(), psi.as_ptr(), len, &mut u, ptr::null_mut()), CmaStatus::NullPointer);
        cma_field_free(bd);
        cma_field_free(sb);
        cma_field_free(u);
        cma_grid_free(g);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(cma_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
