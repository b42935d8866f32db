//! Numerical engine for projective Finsler geometry.
//!
//! The crate evaluates the Berwald curvature apparatus of a spray or Finsler
//! metric, applies projective changes of the spray, and checks the projective
//! invariants (Weyl and Douglas tensors, projective connection) together with
//! the transformation laws that relate a spray to its projective deformations.
//!
//! Derivatives are exact: all fields are evaluated on towers of nested
//! first-order dual numbers ([`jet`]), with an independent finite-difference
//! oracle ([`oracle`]) for cross-validation.

pub mod apparatus;
pub mod classify;
pub mod cli;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod jet;
pub mod metrics;
pub mod oracle;
pub mod projective;
pub mod report;
pub mod sample;
pub mod spray;
pub mod suite;
pub mod taylor;

pub use error::{Error, Result};
