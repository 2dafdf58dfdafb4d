//! Assembly of the linear delayed model from the slot Jacobians at an
//! equilibrium.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dual::{jacobian_slots, JacobianError};
use crate::model::{EquilibriumPoint, ModelSpec, ParameterPoint};

/// A real coefficient matrix together with its delay value (0 for the
/// undelayed term).
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedMatrix {
    pub delay: f64,
    pub m: DMatrix<f64>,
}

/// The linear delayed system around an equilibrium:
/// `xi'(t) = sum_i A_i xi(t - tau_i) + sum_j B_j nu(t - nu_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDelayModel {
    /// l+1 state coefficient matrices, delay tags strictly increasing from 0.
    pub a: Vec<TaggedMatrix>,
    /// r+1 input coefficient matrices, delay tags strictly increasing from 0.
    pub b: Vec<TaggedMatrix>,
    pub equilibrium: EquilibriumPoint,
    pub u_bar: Vec<f64>,
}

impl LinearDelayModel {
    pub fn n(&self) -> usize {
        self.a[0].m.nrows()
    }
    pub fn k(&self) -> usize {
        self.b[0].m.ncols()
    }
    pub fn state_delays(&self) -> Vec<f64> {
        self.a.iter().skip(1).map(|t| t.delay).collect()
    }
    pub fn input_delays(&self) -> Vec<f64> {
        self.b.iter().skip(1).map(|t| t.delay).collect()
    }

    /// All coefficient entries vectorized row-major, A blocks then B blocks.
    /// The coefficient-map Jacobian differentiates exactly this vector.
    pub fn coefficient_vector(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for t in self.a.iter().chain(self.b.iter()) {
            for i in 0..t.m.nrows() {
                for j in 0..t.m.ncols() {
                    v.push(t.m[(i, j)]);
                }
            }
        }
        v
    }
}

/// Serializable form of a tagged matrix (row-major entries).
#[derive(Debug, Clone, Serialize)]
pub struct TaggedMatrixDump {
    pub delay: f64,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
}

impl From<&TaggedMatrix> for TaggedMatrixDump {
    fn from(t: &TaggedMatrix) -> Self {
        let mut entries = Vec::with_capacity(t.m.len());
        for i in 0..t.m.nrows() {
            for j in 0..t.m.ncols() {
                entries.push(t.m[(i, j)]);
            }
        }
        TaggedMatrixDump {
            delay: t.delay,
            rows: t.m.nrows(),
            cols: t.m.ncols(),
            entries,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearDelayModelDump {
    pub a: Vec<TaggedMatrixDump>,
    pub b: Vec<TaggedMatrixDump>,
    pub equilibrium: EquilibriumPoint,
    pub u_bar: Vec<f64>,
}

impl From<&LinearDelayModel> for LinearDelayModelDump {
    fn from(m: &LinearDelayModel) -> Self {
        LinearDelayModelDump {
            a: m.a.iter().map(Into::into).collect(),
            b: m.b.iter().map(Into::into).collect(),
            equilibrium: m.equilibrium.clone(),
            u_bar: m.u_bar.clone(),
        }
    }
}

/// Build the linear delayed model at a converged equilibrium.
pub fn linearize(
    spec: &ModelSpec,
    point: &ParameterPoint,
    eq: &EquilibriumPoint,
) -> Result<LinearDelayModel, JacobianError> {
    debug_assert!(eq.converged);
    let (a_mats, b_mats) = jacobian_slots(spec, eq, point)?;
    let a = a_mats
        .into_iter()
        .enumerate()
        .map(|(i, m)| TaggedMatrix {
            delay: if i == 0 { 0.0 } else { point.tau[i - 1] },
            m,
        })
        .collect();
    let b = b_mats
        .into_iter()
        .enumerate()
        .map(|(j, m)| TaggedMatrix {
            delay: if j == 0 { 0.0 } else { point.nu[j - 1] },
            m,
        })
        .collect();
    Ok(LinearDelayModel {
        a,
        b,
        equilibrium: eq.clone(),
        u_bar: point.u_bar.clone(),
    })
}
