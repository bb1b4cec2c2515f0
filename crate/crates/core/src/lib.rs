//! Space-time finite element discretization of a coupled linear elliptic PDE /
//! pointwise ODE system (a simplified gradient-enhanced damage model), the
//! associated tracking-type optimal control problem, and a manufactured-solution
//! harness for measuring convergence rates.
//!
//! The state equation
//!
//! ```text
//!   -α Δφ + β φ = β d + l       in Ω,  φ = 0 on ∂Ω
//!   ∂t d = -(β/δ)(d - φ)        a.e. in Ω,  d(0) = d0
//! ```
//!
//! is discretized with piecewise constants in time (dG(0)) and continuous P1
//! elements in space on a uniform triangulation of the unit square.
//!
//! Module map:
//!
//! * [`mesh`], [`quadrature`], [`fem`]: triangulation, P1 spaces, assembly, projections.
//! * [`sparse`], [`linalg`], [`multigrid`]: CSR storage, PCG, dense oracle solves.
//! * [`time`]: time grids, piecewise-constant space-time fields, data functions.
//! * [`forward`]: the time-stepping state solver.
//! * [`adjoint`]: the backward dual solver and the space-time bilinear form.
//! * [`optimizer`]: reduced-gradient conjugate gradients for the control problem.
//! * [`harness`]: manufactured solutions, error norms, EOC tables, CSV and SVG output.
//! * [`verify`]: property checks shared by the test suites and the `verify` CLI command.

pub mod adjoint;
pub mod error;
pub mod fem;
pub mod forward;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod optimizer;
pub mod par;
pub mod quadrature;
pub mod sparse;
pub mod time;
pub mod verify;

pub use error::{Error, Result};
