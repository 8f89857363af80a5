//! Spectral models of bounded normal operators on separable Hilbert spaces,
//! restricted to finitely many represented spectrum atoms so that every
//! operation is exact finite arithmetic.
//!
//! The crate is organized around one data spine:
//!
//! * [`linalg`] turns a concrete normal matrix into eigenvalues plus a unitary,
//! * [`model`] holds the abstract form: blocks `(lambda, multiplicity)` with
//!   lazily materialized coordinates, projection-valued measure operations and
//!   scalar spectral measures,
//! * [`measure`] is atomic-measure arithmetic (total variation, Hellinger-type
//!   distances, weak-star tests on dyadic squares),
//! * [`closure`] computes definable and algebraic closure subspaces,
//! * [`typespace`] represents 1- and n-types as base projections plus residual
//!   measure matrices,
//! * [`independence`] implements the projection characterization of
//!   independence, free extensions, Morley sequences and canonical bases,
//! * [`equivalence`] compares models and theories (spectral equivalence,
//!   axiom residuals, approximate unitary alignment, limits of theories,
//!   perturbation distance),
//! * [`calculus`] applies functions to operators and produces polynomial
//!   witnesses.
//!
//! All public operations are pure functions on immutable values; the only
//! mutating entry point is coordinate allocation on a model, which callers
//! must serialize themselves.

pub mod calculus;
pub mod closure;
pub mod common;
pub mod equivalence;
pub mod independence;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod testkit;
pub mod typespace;

mod error;

pub use error::Error;
pub use num_complex::Complex64;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
