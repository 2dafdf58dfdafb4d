//! Canonical in-memory representation of a nonlinear delayed-differential
//! model and of concrete parameter points.
//!
//! Delay *labels* live here; concrete delay values live in
//! [`ParameterPoint`] so the analyzer can sweep them independently of the
//! model structure.

use serde::Serialize;

use crate::expr::{EvalError, Expr};
use crate::num::Scalar;

/// Output map `y = C x`; v1 only analyzes the identity map.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMap {
    Identity,
    Matrix(Vec<Vec<f64>>),
}

/// Parsed nonlinear delayed model: one expression tree per state derivative,
/// referencing state slots `z_0..z_l`, input slots `w_0..w_r` and parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub param_names: Vec<String>,
    /// Labels for the state delays tau_1..tau_l, in slot order.
    pub tau_names: Vec<String>,
    /// Labels for the input delays nu_1..nu_r, in slot order.
    pub nu_names: Vec<String>,
    pub equations: Vec<Expr>,
    pub output_map: OutputMap,
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        self.state_names.len()
    }
    pub fn k(&self) -> usize {
        self.input_names.len()
    }
    pub fn p(&self) -> usize {
        self.param_names.len()
    }
    pub fn l(&self) -> usize {
        self.tau_names.len()
    }
    pub fn r(&self) -> usize {
        self.nu_names.len()
    }
}

/// Concrete parameter assignment `P = (p_1..p_p, tau_1..tau_l, nu_1..nu_r)`
/// plus the constant input level `u_bar`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterPoint {
    pub p_s: Vec<f64>,
    /// State delays, strictly increasing, all > 0.
    pub tau: Vec<f64>,
    /// Input delays, strictly increasing, all > 0.
    pub nu: Vec<f64>,
    pub u_bar: Vec<f64>,
}

impl ParameterPoint {
    pub fn tau_max(&self) -> f64 {
        self.tau.iter().cloned().fold(0.0, f64::max)
    }
    pub fn nu_max(&self) -> f64 {
        self.nu.iter().cloned().fold(0.0, f64::max)
    }
}

/// Solution of `0 = f(x_e, ..., x_e, u_bar, ..., u_bar, P_s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub x_e: Vec<f64>,
    /// Max-norm of the residual, recomputable via [`eval_rhs`].
    pub residual_norm: f64,
    pub converged: bool,
}

/// A single validation finding; violations are data, not exceptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

fn ordered_strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) && v.first().map_or(true, |&x| x > 0.0)
}

/// Check a (spec, point) pair for analyzability. An empty list means the
/// pair can enter the pipeline.
pub fn validate(spec: &ModelSpec, point: &ParameterPoint) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, message: String| out.push(Violation { code, message });

    if spec.equations.len() != spec.n() {
        push(
            "equation-count",
            format!("expected {} equations, found {}", spec.n(), spec.equations.len()),
        );
    }
    for (i, eq) in spec.equations.iter().enumerate() {
        let mut bad = Vec::new();
        eq.visit(&mut |e| match e {
            Expr::State { state, delay, .. } => {
                if *state >= spec.n() || *delay > spec.l() {
                    bad.push(format!("state slot ({state},{delay})"));
                }
            }
            Expr::Input { input, delay, .. } => {
                if *input >= spec.k() || *delay > spec.r() {
                    bad.push(format!("input slot ({input},{delay})"));
                }
            }
            Expr::Param { idx, .. } => {
                if *idx >= spec.p() {
                    bad.push(format!("parameter {idx}"));
                }
            }
            _ => {}
        });
        for b in bad {
            push("slot-bounds", format!("equation {i}: {b} out of declared bounds"));
        }
    }
    match &spec.output_map {
        OutputMap::Identity => {}
        OutputMap::Matrix(rows) => {
            let is_identity = rows.len() == spec.n()
                && rows.iter().enumerate().all(|(i, row)| {
                    row.len() == spec.n()
                        && row
                            .iter()
                            .enumerate()
                            .all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
                });
            if !is_identity {
                push(
                    "non-identity-output",
                    "non-identity output map unsupported in v1".to_string(),
                );
            }
        }
    }

    if point.p_s.len() != spec.p() {
        push(
            "param-count",
            format!("expected {} parameter values, found {}", spec.p(), point.p_s.len()),
        );
    }
    if point.tau.len() != spec.l() {
        push(
            "tau-count",
            format!("expected {} state-delay values, found {}", spec.l(), point.tau.len()),
        );
    }
    if point.nu.len() != spec.r() {
        push(
            "nu-count",
            format!("expected {} input-delay values, found {}", spec.r(), point.nu.len()),
        );
    }
    if point.u_bar.len() != spec.k() {
        push(
            "input-count",
            format!("expected {} input levels, found {}", spec.k(), point.u_bar.len()),
        );
    }
    if !ordered_strictly_increasing(&point.tau) {
        push(
            "tau-order",
            "state delays not strictly increasing and positive".to_string(),
        );
    }
    if !ordered_strictly_increasing(&point.nu) {
        push(
            "nu-order",
            "input delays not strictly increasing and positive".to_string(),
        );
    }
    let finite = point
        .p_s
        .iter()
        .chain(&point.tau)
        .chain(&point.nu)
        .chain(&point.u_bar)
        .all(|v| v.is_finite());
    if !finite {
        push("non-finite", "parameter point contains non-finite entries".to_string());
    }
    out
}

/// Domain failure during right-hand-side evaluation, tagged with the
/// offending equation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("equation {equation}: {source}")]
pub struct RhsError {
    pub equation: usize,
    #[source]
    pub source: EvalError,
}

/// Evaluate `f` at the given slot values. Pure and deterministic; output
/// length is always `n`.
pub fn eval_rhs<N: Scalar>(
    spec: &ModelSpec,
    z_slots: &[Vec<N>],
    w_slots: &[Vec<N>],
    p_s: &[N],
) -> Result<Vec<N>, RhsError> {
    debug_assert_eq!(z_slots.len(), spec.l() + 1);
    debug_assert_eq!(w_slots.len(), spec.r() + 1);
    spec.equations
        .iter()
        .enumerate()
        .map(|(equation, e)| {
            crate::expr::eval_expr(e, z_slots, w_slots, p_s)
                .map_err(|source| RhsError { equation, source })
        })
        .collect()
}

/// Convenience: `f` with all state slots tied to `x` and all input slots
/// tied to `u_bar` (the equilibrium residual map).
pub fn eval_rhs_collapsed(
    spec: &ModelSpec,
    x: &[f64],
    point: &ParameterPoint,
) -> Result<Vec<f64>, RhsError> {
    let z: Vec<Vec<f64>> = (0..=spec.l()).map(|_| x.to_vec()).collect();
    let w: Vec<Vec<f64>> = (0..=spec.r()).map(|_| point.u_bar.clone()).collect();
    eval_rhs(spec, &z, &w, &point.p_s)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(f64::abs(*x)))
}
