//! Solvers for box-simplex games (l-inf/l-1 bilinear saddle-point problems)
//! and their box-spectraplex matrix generalization, with exactly computable
//! duality-gap certificates.
//!
//! The main entry points:
//!
//! - [`boxsimplex::solve`]: the extragradient solver with closed-form oracle
//!   steps, `O(L log d / eps)` iterations, one exact gap certificate per trace
//!   point.
//! - [`spectraplex::solve`]: the matrix analogue over the set of trace-1 PSD
//!   matrices, driven by exact or randomized matrix-exponential queries.
//! - [`apps`]: optimal transport, min-mean-cycle, and l1/l-inf flow
//!   reductions onto the canonical game.
//! - [`checks`]: runtime-checkable forms of the analysis invariants
//!   (joint/area convexity, oracle inequalities, divergence bounds).

pub mod apps;
pub mod boxsimplex;
pub mod checks;
pub mod error;
pub mod io;
pub mod meq;
pub mod problem;
pub mod reg;
pub mod simplex;
pub mod sparse;
pub mod spectral;
pub mod spectraplex;
pub mod subproblem;
pub mod xgrad;

pub use error::{Error, Result};
pub use problem::{lipschitz_1to1, BoxSimplexInstance, PrimalDualPoint, SolverParams};
pub use sparse::SparseMatrix;
