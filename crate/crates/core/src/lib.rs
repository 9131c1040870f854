//! Numerical laboratory for viscosity solutions of
//! `εv − trace(A(x)D²v) + H(x, Dv) = 0`, its ergodic limit and the evolution
//! `u_t − trace(A(x)D²u) + H(x, Du) = 0` on the flat torus `T^d`, `d ≤ 2`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the solvers are tuned for.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ergodic;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linalg;
mod newton;
pub mod oracles;
pub mod parabolic;
pub mod problem;
pub mod regularity;
pub mod scalar;
pub mod scheme;
pub mod stationary;

pub use error::{Error, Result};
pub use grid::{MultiIndex, Point, ScalarField, TorusGrid, VectorSample};
pub use newton::SolveMethod;
pub use problem::{Coefficient, DiffusionSpec, HamiltonianSpec};
pub use scalar::Real;

pub type Field64 = ScalarField<f64>;
pub type Field32 = ScalarField<f32>;
pub type Hamiltonian64 = HamiltonianSpec<f64>;
pub type Diffusion64 = DiffusionSpec<f64>;
