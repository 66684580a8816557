//! Solvers for the 1D viscous Burgers equation
//! `u_t = -u u_x + nu u_xx`:
//!
//! - [`grid`]: dense central-difference stencils and the explicit-Euler
//!   reference solver.
//! - [`tt`] and [`tt_solver`]: quantized tensor-train (MPS/MPO) encoding,
//!   arithmetic and χ-truncated time evolution.
//! - [`qsim`]: exact statevector simulation with shot sampling.
//! - [`vqa`]: variational time marching with parameter-shift gradients.
//! - [`qpinn`]: classical and hybrid quantum physics-informed networks.

pub mod error;
pub mod grid;
pub mod qpinn;
pub mod qsim;
pub mod tt;
pub mod tt_solver;
pub mod vqa;

pub use error::{Error, Result};
