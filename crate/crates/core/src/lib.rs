//! Numerical verification of stochastic optimal control policies.
//!
//! The crate solves semilinear HJB equations on one-dimensional grids,
//! simulates controlled diffusions with Euler–Maruyama, and checks the
//! identity
//!
//! ```text
//! J(t, x; z) = v(t, x) + E ∫ [H_CV(s, y, ∂ₓv; z) − H(s, y, ∂ₓv)] ds
//! ```
//!
//! by Monte Carlo, turning it into three-valued optimality certificates.
//!
//! Everything here is `no_std` + `alloc`. File formats, configuration and the
//! command line live in the `hjbv` companion crate, which also provides a
//! thread-pool [`exec::Executor`].
//!
//! All internal computation uses the minimization convention: a problem posed
//! as a maximization is handled through its negated costs, and reported values
//! are mapped back to the original sign.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

extern crate alloc;

pub mod benchmarks;
pub mod error;
pub mod exec;
pub mod field;
pub mod hamiltonian;
pub mod hjb;
pub mod problem;
pub mod rng;
pub mod sde;
mod tridiag;
pub mod verify;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use field::{Provenance, ValueField};
pub use problem::{ControlProblem, ControlSet, Domain, Horizon, Sense};

/// Upper bound on state, noise and control dimensions.
///
/// Hot loops keep their scratch vectors on the stack with this capacity.
pub const MAX_DIM: usize = 8;
