use serde::Serialize;

use crate::grid::{chern_laplacian, gradient_norms, ScalarField};
use crate::ma::{admissibility, MaProblem};

/// Sups of |∇u| and Δu over the whole grid and near the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitor {
    pub grad_sup: f64,
    pub grad_sup_boundary: f64,
    pub lap_sup: f64,
    /// over interior points next to the boundary
    pub lap_sup_boundary: f64,
    /// grad_sup / grad_sup_boundary; `None` for 0/0 or a grid without boundary
    pub grad_ratio: Option<f64>,
    pub lap_ratio: Option<f64>,
    pub lambda_min: f64,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

pub fn estimate_monitor(u: &ScalarField, prob: &MaProblem) -> Monitor {
    let grid = prob.grid();
    let grads = gradient_norms(u, prob.g()).unwrap_or_else(|_| vec![f64::NAN; grid.len()]);
    let lap = chern_laplacian(u, prob.g()).map(|f| f.into_values()).unwrap_or_else(|_| vec![f64::NAN; grid.len()]);
    let mask = grid.boundary_mask();
    let d = grid.axes().len();
    let mut m = vec![0usize; d];
    let (mut gs, mut gb, mut ls, mut lb) = (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for idx in 0..grid.len() {
        gs = gs.max(grads[idx]);
        if mask[idx] {
            gb = gb.max(grads[idx]);
            continue;
        }
        ls = ls.max(lap[idx]);
        if grid.has_boundary() {
            grid.multi_index(idx, &mut m);
            let near = grid.axes().iter().enumerate().any(|(a, ax)| {
                ax.kind == crate::grid::AxisKind::Dirichlet && (m[a] == 1 || m[a] + 1 == ax.res)
            });
            if near {
                lb = lb.max(lap[idx]);
            }
        }
    }
    if ls == f64::NEG_INFINITY {
        ls = 0.0;
    }
    if lb == f64::NEG_INFINITY {
        lb = 0.0;
    }
    let (_, lambda_min) = admissibility(u, prob);
    Monitor {
        grad_sup: gs,
        grad_sup_boundary: gb,
        lap_sup: ls,
        lap_sup_boundary: lb,
        grad_ratio: ratio(gs, gb),
        lap_ratio: ratio(ls, lb),
        lambda_min,
    }
}
