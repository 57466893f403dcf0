//! Total-variation image restoration by an augmented Lagrangian method with
//! semismooth Newton inner solvers, plus a first-order primal-dual baseline.
//!
//! The problem is
//! `min_u 0.5 |K u - z|^2 + 0.5 mu |grad u|^2 + alpha TV(u)`
//! on an `M x N` pixel grid, with isotropic or anisotropic TV.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alg2;
pub mod alm;
pub mod bench;
pub mod degrade;
pub mod error;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod linops;
pub mod metrics;
pub mod problem;
pub mod prox;
pub mod report;
pub mod runner;
pub mod ssn;

pub use error::{Error, Result};
pub use grid::{div, grad, GridShape, Image, VecField};
pub use linops::{BlurKernel, DataOperator};
pub use problem::Problem;
pub use prox::TvVariant;
