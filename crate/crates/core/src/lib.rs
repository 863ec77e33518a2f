//! Curvature of radial Kähler metrics in momentum coordinates: profile
//! algebra, curvature formulas, classification of canonical metrics,
//! potential reconstruction and independent numerical cross-checks.

// `!(x > 0.0)` is used deliberately so NaN falls into the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod geometry;
pub mod ode;
pub mod classify;
pub mod oracle;
pub mod cli;
