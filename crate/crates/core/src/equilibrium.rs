//! Damped Newton iteration with multi-start for the equilibrium equation
//! `0 = f(x_e, ..., x_e, u_bar, ..., u_bar, P_s)`.
//!
//! At a constant trajectory every delayed argument equals `x_e`, so the
//! Newton direction is solved against the collapsed Jacobian obtained by
//! seeding all state slots with the same direction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dual::jacobian_collapsed;
use crate::model::{eval_rhs_collapsed, inf_norm, EquilibriumPoint, ModelSpec, ParameterPoint};

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub n_starts: usize,
    /// Per-coordinate interval for random initial guesses.
    pub start_box: (f64, f64),
    /// Backtracking factor for the damped step.
    pub damping: f64,
    pub max_backtracks: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: 1e-12,
            max_iters: 100,
            n_starts: 8,
            start_box: (-2.0, 2.0),
            damping: 0.5,
            max_backtracks: 30,
            seed: 0,
        }
    }
}

/// Why a single start did not produce an equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct StartFailure {
    pub start_index: usize,
    pub reason: String,
    pub final_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriaResult {
    pub equilibria: Vec<EquilibriumPoint>,
    pub failures: Vec<StartFailure>,
    /// Starts where a singular Jacobian forced a gradient-descent step.
    pub gradient_fallbacks: usize,
}

fn residual(spec: &ModelSpec, x: &[f64], point: &ParameterPoint) -> Option<DVector<f64>> {
    eval_rhs_collapsed(spec, x, point)
        .ok()
        .map(DVector::from_vec)
        .filter(|f| f.iter().all(|v| v.is_finite()))
}

enum NewtonOutcome {
    Converged(Vec<f64>, f64),
    Failed(String, Option<f64>),
}

fn newton_from(
    spec: &ModelSpec,
    point: &ParameterPoint,
    cfg: &SolverConfig,
    x0: &[f64],
    gradient_fallbacks: &mut usize,
) -> NewtonOutcome {
    let mut x = DVector::from_row_slice(x0);
    let mut f = match residual(spec, x.as_slice(), point) {
        Some(f) => f,
        None => return NewtonOutcome::Failed("residual undefined at start".into(), None),
    };

    for _ in 0..cfg.max_iters {
        if inf_norm(f.as_slice()) <= cfg.tol_residual {
            return NewtonOutcome::Converged(x.as_slice().to_vec(), inf_norm(f.as_slice()));
        }
        let jac = match jacobian_collapsed(spec, x.as_slice(), point) {
            Ok(j) => j,
            Err(e) => {
                return NewtonOutcome::Failed(
                    format!("Jacobian undefined: {e}"),
                    Some(inf_norm(f.as_slice())),
                )
            }
        };
        let dir = match jac.clone().lu().solve(&(-&f)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                // singular Jacobian: descend on ||f||^2 instead
                *gradient_fallbacks += 1;
                let g = jac.transpose() * &f;
                let gn = g.norm();
                if gn == 0.0 {
                    return NewtonOutcome::Failed(
                        "stationary point of the residual norm".into(),
                        Some(inf_norm(f.as_slice())),
                    );
                }
                -g / gn
            }
        };

        let f2 = f.norm_squared();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let xn = &x + &dir * lambda;
            if let Some(fn_) = residual(spec, xn.as_slice(), point) {
                if fn_.norm_squared() < f2 {
                    x = xn;
                    f = fn_;
                    accepted = true;
                    break;
                }
            }
            lambda *= cfg.damping;
        }
        if !accepted {
            return NewtonOutcome::Failed(
                "line search stalled".into(),
                Some(inf_norm(f.as_slice())),
            );
        }
    }
    let rn = inf_norm(f.as_slice());
    if rn <= cfg.tol_residual {
        NewtonOutcome::Converged(x.as_slice().to_vec(), rn)
    } else {
        NewtonOutcome::Failed("max iterations reached".into(), Some(rn))
    }
}

/// All distinct converged equilibria found across multi-starts, sorted
/// lexicographically. Distinct means pairwise max-norm distance > 1e-6.
pub fn find_equilibria(
    spec: &ModelSpec,
    point: &ParameterPoint,
    cfg: &SolverConfig,
) -> EquilibriaResult {
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut failures = Vec::new();
    let mut gradient_fallbacks = 0;

    for s in 0..cfg.n_starts {
        let x0: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(cfg.start_box.0..=cfg.start_box.1))
            .collect();
        match newton_from(spec, point, cfg, &x0, &mut gradient_fallbacks) {
            NewtonOutcome::Converged(x, rn) => found.push((x, rn)),
            NewtonOutcome::Failed(reason, final_residual) => failures.push(StartFailure {
                start_index: s,
                reason,
                final_residual,
            }),
        }
    }

    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut equilibria: Vec<EquilibriumPoint> = Vec::new();
    for (x, rn) in found {
        let distinct = equilibria.iter().all(|e| {
            e.x_e
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                > 1e-6
        });
        if distinct {
            equilibria.push(EquilibriumPoint {
                x_e: x,
                residual_norm: rn,
                converged: true,
            });
        }
    }

    EquilibriaResult {
        equilibria,
        failures,
        gradient_fallbacks,
    }
}

/// Newton from a single given start (used for equilibrium tracking under
/// parameter perturbations).
pub fn solve_from(
    spec: &ModelSpec,
    point: &ParameterPoint,
    cfg: &SolverConfig,
    x0: &[f64],
) -> Option<EquilibriumPoint> {
    let mut fallbacks = 0;
    match newton_from(spec, point, cfg, x0, &mut fallbacks) {
        NewtonOutcome::Converged(x_e, residual_norm) => Some(EquilibriumPoint {
            x_e,
            residual_norm,
            converged: true,
        }),
        NewtonOutcome::Failed(..) => None,
    }
}

#[allow(unused)]
fn collapsed_jacobian_matrix(spec: &ModelSpec, x: &[f64], point: &ParameterPoint) -> DMatrix<f64> {
    jacobian_collapsed(spec, x, point).expect("smooth model")
}
