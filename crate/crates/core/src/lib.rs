//! Variance-reduced inexact prox-linear methods for
//! `min_x Φ(x) = f(g(x)) + h(x)`, where `f` and `h` are convex, `g` is smooth,
//! and `g` is a finite average or an expectation of sampled components.
//!
//! The crate is organised bottom-up:
//!
//! - [`composite`]: the problem, `Φ`, the linearized model, the generalized gradient.
//! - [`problems`]: synthetic generators with closed-form constants.
//! - [`estimators`]: the five estimator constructions with oracle accounting.
//! - [`subproblem`]: the strongly convex step subproblem and its solvers.
//! - [`planner`]: concentration bounds, error coefficients, parameter rules.
//! - [`driver`]: the two nested loops, stationarity traces, descent audits.
//! - [`cli`]: JSON-configured experiments (`run`, `sweep`, `validate`).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod composite;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod parallel;
pub mod planner;
pub mod problems;
pub mod sampling;
pub mod subproblem;

pub use error::{Error, Result};
