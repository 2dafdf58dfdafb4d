//! Local injectivity of the parameter-to-coefficient map.
//!
//! Once the rank test certifies that the coefficient matrices and delays are
//! identifiable, equality of coefficients must still force equality of the
//! physical parameters. The symbolic argument is replaced here by a local
//! full-column-rank test of the map `P_s -> (vec A_0..A_l, vec B_0..B_r)`,
//! differentiated by central differences through the full
//! equilibrium -> linearize pipeline (the equilibrium is re-solved at every
//! perturbed parameter, which also covers parameter-dependent equilibria).
//! The resulting claim is *local* identifiability only.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::equilibrium::{solve_from, SolverConfig};
use crate::linearize::linearize;
use crate::model::{EquilibriumPoint, ModelSpec, ParameterPoint};
use crate::rank::numerical_rank_real;

/// Central-difference step for the outer map.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CoeffMapReport {
    /// (total coefficient count, parameter count).
    pub map_dim: (usize, usize),
    pub jacobian_rank: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Per parameter: indices into the coefficient vector with sensitivity
    /// above the rank threshold.
    pub sensitive_coeffs: Vec<SensitiveParam>,
    pub locally_injective: bool,
    /// Parameters participating in a near-null direction of the map.
    pub entangled: Vec<String>,
    /// Parameter points at which the map was probed.
    pub probe_points: Vec<Vec<f64>>,
    /// Per-column failures (perturbed equilibrium solve diverged).
    pub column_failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitiveParam {
    pub parameter: String,
    pub coefficient_indices: Vec<usize>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum CoeffError {
    #[error("equilibrium tracking failed for parameter `{0}` ({1} perturbation)")]
    Tracking(String, &'static str),
    #[error("linearization failed: {0}")]
    Linearize(#[from] crate::dual::JacobianError),
}

fn coefficients_at(
    spec: &ModelSpec,
    point: &ParameterPoint,
    warm_start: &[f64],
    cfg: &SolverConfig,
) -> Option<Vec<f64>> {
    let eq = solve_from(spec, point, cfg, warm_start)?;
    linearize(spec, point, &eq).ok().map(|m| m.coefficient_vector())
}

/// Sensitivity of every vectorized coefficient entry with respect to each
/// parameter, ((l+1) n^2 + (r+1) n k) x p.
pub fn coeff_map_jacobian(
    spec: &ModelSpec,
    point: &ParameterPoint,
    eq: &EquilibriumPoint,
    solver: &SolverConfig,
) -> Result<(DMatrix<f64>, Vec<String>), CoeffError> {
    let p = spec.p();
    let rows = (spec.l() + 1) * spec.n() * spec.n() + (spec.r() + 1) * spec.n() * spec.k();
    let mut jac = DMatrix::zeros(rows, p);
    let mut failures = Vec::new();

    for j in 0..p {
        let mut plus = point.clone();
        plus.p_s[j] += FD_STEP;
        let mut minus = point.clone();
        minus.p_s[j] -= FD_STEP;
        let name = &spec.param_names[j];
        let vp = match coefficients_at(spec, &plus, &eq.x_e, solver) {
            Some(v) => v,
            None => {
                failures.push(format!("parameter `{name}`: +step equilibrium solve diverged"));
                continue;
            }
        };
        let vm = match coefficients_at(spec, &minus, &eq.x_e, solver) {
            Some(v) => v,
            None => {
                failures.push(format!("parameter `{name}`: -step equilibrium solve diverged"));
                continue;
            }
        };
        for (i, (a, b)) in vp.iter().zip(&vm).enumerate() {
            jac[(i, j)] = (a - b) / (2.0 * FD_STEP);
        }
    }
    Ok((jac, failures))
}

/// Decide local injectivity from a coefficient-map Jacobian.
pub fn injectivity_verdict(
    spec: &ModelSpec,
    point: &ParameterPoint,
    jac: &DMatrix<f64>,
    column_failures: Vec<String>,
    rel_tol: f64,
) -> CoeffMapReport {
    let p = jac.ncols();
    let (jacobian_rank, singular_values, threshold) = if p == 0 {
        (0, Vec::new(), 0.0)
    } else {
        numerical_rank_real(jac, rel_tol)
    };
    let locally_injective = jacobian_rank == p; // vacuous pass when p = 0

    let sensitive_coeffs = (0..p)
        .map(|j| SensitiveParam {
            parameter: spec.param_names[j].clone(),
            coefficient_indices: (0..jac.nrows())
                .filter(|&i| jac[(i, j)].abs() > threshold)
                .collect(),
        })
        .collect();

    // Near-null right singular directions expose entangled parameters.
    let mut entangled = Vec::new();
    if p > 0 && !locally_injective {
        let svd = jac.clone().svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut involved = vec![false; p];
        for (idx, s) in svd.singular_values.iter().enumerate() {
            if *s <= threshold && idx < vt.nrows() {
                let row = vt.row(idx);
                let maxc = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                for j in 0..p {
                    if row[j].abs() > 0.1 * maxc {
                        involved[j] = true;
                    }
                }
            }
        }
        entangled = (0..p)
            .filter(|&j| involved[j])
            .map(|j| spec.param_names[j].clone())
            .collect();
    }

    CoeffMapReport {
        map_dim: (jac.nrows(), p),
        jacobian_rank,
        singular_values,
        threshold,
        sensitive_coeffs,
        locally_injective,
        entangled,
        probe_points: vec![point.p_s.clone()],
        column_failures,
    }
}

/// Full probe at one parameter point: Jacobian plus verdict.
pub fn probe_injectivity(
    spec: &ModelSpec,
    point: &ParameterPoint,
    eq: &EquilibriumPoint,
    solver: &SolverConfig,
    rel_tol: f64,
) -> Result<CoeffMapReport, CoeffError> {
    let (jac, failures) = coeff_map_jacobian(spec, point, eq, solver)?;
    Ok(injectivity_verdict(spec, point, &jac, failures, rel_tol))
}
