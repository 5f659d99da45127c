//! Low-complexity regularization of linear inverse problems.
//!
//! The crate is organized around the forward model `y = Φ x0 + w` and the
//! penalized problem `min_x ½‖y − Φx‖² + λ J(x)` (and its noiseless limit
//! `min J(x) s.t. Φx = y`), where `J` is a partly smooth convex regularizer.
//!
//! - [`problem`]: forward operator, random instances and seeded substreams.
//! - [`regularizers`]: evaluation, proximity operators, model tangent
//!   subspaces, generalized signs and subdifferential membership tests.
//! - [`certificates`]: restricted injectivity, linearized pre-certificate,
//!   minimal-norm certificate and the ℓ1 criteria chain.
//! - [`solvers`]: forward-backward, Douglas-Rachford and primal-dual splitting
//!   with manifold-identification traces.
//! - [`risk`]: degrees of freedom, SURE and λ-path selection.
//! - [`xcli`]: the experiment harness behind the `lowrex` binary.

// `!(x > 0.0)` rejects NaN together with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod regularizers;
pub mod risk;
pub mod solvers;
pub mod xcli;

pub use error::{Error, Result};
pub use problem::{LinearMap, ProblemInstance, SignalKind, SignalSpec};
pub use regularizers::{ManifoldTag, ModelDescriptor, Position, Regularizer, SubdiffPosition};

/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
