//! Accelerated gradient and linear conjugate gradient as two instances of a
//! single three-parameter iteration, together with a potential
//! `Ψ_k = ‖w_k‖² + (2/ℓ)(f(x_k) − f*)` that contracts by a fixed factor on
//! every step of either method. The crate runs the iterations, computes the
//! potential and its contraction certificate, checks the classical
//! Hestenes-Stiefel identities, and uses the certificate as a detector for
//! inexact matrix-vector products.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod dd;
pub mod error;
pub mod linalg;
pub mod mpfloat;
pub mod objective;
pub mod perturb;
pub mod potential;
pub mod problem;
pub mod quadratic_gen;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use objective::{Function, LogisticRidgeObjective, ObjectiveModel, QuadraticObjective};
pub use quadratic_gen::{GroundTruth, Layout, SpectrumSpec};
pub use solvers::{Method, SolverState, Trace};
