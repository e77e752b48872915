//! Matrix-free inexact semismooth Newton–GMRES solver, with nonmonotone line
//! search, for box-constrained optimal control of semilinear elliptic PDEs on
//! the unit square.
//!
//! Modules, bottom up:
//!
//! - [`grid`]: uniform grid, grid functions, the five-point `-Δ_h`.
//! - [`problem`]: projection, residual `F`, slanting operator `G`, merit `Q`.
//! - [`krylov`]: restarted GMRES and a dense LU oracle.
//! - [`solver`]: the Newton loop, forcing terms, line search.
//! - [`examples`]: the two benchmark problems.
//! - [`io`]: problem files, CSV histories and JSON reports.
//! - [`cli`]: the `issng` command-line driver.

pub mod cli;
pub mod examples;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod problem;
pub mod solver;
