//! Steady-state solver suite for structured-population models.
//!
//! The crate computes positive steady states of nonlinear structured
//! population equations by a spectral route: for each fixed environment the
//! linearized transport generator has a rightmost eigenvalue (the spectral
//! bound), the zero level set of that bound over the environment quadrant is
//! traced ray by ray, and a steady state is a point on that level set whose
//! regenerated environment matches itself. Four model variants are covered:
//! juvenile-adult size structure, a consumer-resource pair, an age-structured
//! model with senescent mortality feedback, and a trait-age selection-mutation
//! model whose renewal step is a compact kernel operator.

// Guards are written `!(x > 0.0)` on purpose: the negation also catches NaN,
// which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expr;
pub mod fixedpoint;
pub mod levelset;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod reproduction;
pub mod selmut;
pub mod spectral;

pub use error::{Error, ParseError, Result};
pub use expr::RateExpression;
pub use model::{
    Density2D, Environment, StructuredModel, ValidationIssue, ValidationReport,
};
pub use numerics::{Grid, GridFn};
