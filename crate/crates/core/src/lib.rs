//! Structural identifiability testing for nonlinear delay-differential
//! models with constant delays.
//!
//! The pipeline: parse a model file into an expression IR, locate
//! equilibria of the frozen (delay-collapsed) system, linearize around
//! each equilibrium with forward-mode autodiff to obtain tagged delay
//! coefficient matrices, and evaluate a complex Kalman-style rank
//! condition on the delay polynomial matrices. A method-of-steps
//! simulator backs the analysis with empirical linearization-error
//! scaling checks.

pub mod coeff;
pub mod config;
pub mod dual;
pub mod equilibrium;
pub mod expr;
pub mod linearize;
pub mod model;
pub mod num;
pub mod parse;
pub mod pipeline;
pub mod rank;
pub mod report;
pub mod signal;
pub mod sim;
