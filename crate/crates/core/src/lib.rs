//! Numerical laboratory for complex Monge-Ampère equations on flat tori and
//! boxes in C^n.

pub mod cli;
pub mod geom;
pub mod geodesic;
pub mod grid;
pub mod linalg;
pub mod linsolve;
pub mod ma;
pub mod oracles;
pub mod solver;
