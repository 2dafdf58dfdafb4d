//! Forward-mode automatic differentiation with multi-directional dual numbers.
//!
//! A [`Dual`] carries a value and a vector of directional derivatives. Slot
//! Jacobians of the model right-hand side are computed by seeding unit
//! directions on the columns of one slot at a time and reading the derivative
//! parts off the evaluated equations.

use nalgebra::DMatrix;

use crate::expr::EvalError;
use crate::model::{EquilibriumPoint, ModelSpec, ParameterPoint};
use crate::num::{NumError, Scalar};

/// Dual number with a value part and a derivative part of arbitrary width.
///
/// An empty derivative vector denotes an exact zero derivative (constants);
/// binary operations treat it as a zero vector of the partner's width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub d: Vec<f64>,
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual { re, d: Vec::new() }
    }

    /// Variable seeded with a unit direction `dir` out of `ndirs`.
    pub fn seeded(re: f64, dir: usize, ndirs: usize) -> Self {
        let mut d = vec![0.0; ndirs];
        d[dir] = 1.0;
        Dual { re, d }
    }

    pub fn with_grad(re: f64, d: Vec<f64>) -> Self {
        Dual { re, d }
    }

    fn is_const(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }

    /// Derivative vector padded to `ndirs`.
    pub fn grad(&self, ndirs: usize) -> Vec<f64> {
        let mut g = self.d.clone();
        g.resize(ndirs, 0.0);
        g
    }

    fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| f(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
            .collect()
    }

    fn map(&self, re: f64, scale: f64) -> Dual {
        Dual {
            re,
            d: self.d.iter().map(|v| v * scale).collect(),
        }
    }
}

impl Scalar for Dual {
    fn lift(v: f64) -> Self {
        Dual::constant(v)
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn add(&self, o: &Self) -> Self {
        Dual {
            re: self.re + o.re,
            d: Dual::zip(&self.d, &o.d, |a, b| a + b),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual {
            re: self.re - o.re,
            d: Dual::zip(&self.d, &o.d, |a, b| a - b),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual {
            re: self.re * o.re,
            d: Dual::zip(&self.d, &o.d, |a, b| a * o.re + b * self.re),
        }
    }
    fn neg(&self) -> Self {
        self.map(-self.re, -1.0)
    }
    fn div(&self, o: &Self) -> Result<Self, NumError> {
        if o.re == 0.0 {
            return Err(NumError::DivisionByZero);
        }
        let re = self.re / o.re;
        Ok(Dual {
            re,
            d: Dual::zip(&self.d, &o.d, |a, b| (a - re * b) / o.re),
        })
    }
    fn sin(&self) -> Self {
        self.map(self.re.sin(), self.re.cos())
    }
    fn cos(&self) -> Self {
        self.map(self.re.cos(), -self.re.sin())
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.map(e, e)
    }
    fn ln(&self) -> Result<Self, NumError> {
        if self.re <= 0.0 {
            return Err(NumError::LogNonPositive);
        }
        Ok(self.map(self.re.ln(), 1.0 / self.re))
    }
    fn sqrt(&self) -> Result<Self, NumError> {
        if self.re < 0.0 {
            return Err(NumError::SqrtNegative);
        }
        if self.re == 0.0 {
            if self.is_const() {
                return Ok(Dual::constant(0.0));
            }
            return Err(NumError::NotDifferentiable);
        }
        let s = self.re.sqrt();
        Ok(self.map(s, 0.5 / s))
    }
    fn abs(&self) -> Result<Self, NumError> {
        if self.re == 0.0 {
            if self.is_const() {
                return Ok(Dual::constant(0.0));
            }
            return Err(NumError::NotDifferentiable);
        }
        Ok(self.map(self.re.abs(), self.re.signum()))
    }
}

/// Differentiation failure tied back to the model.
#[derive(Debug, Clone, thiserror::Error)]
#[error("equation {equation} ({slot}): {source}")]
pub struct JacobianError {
    pub equation: usize,
    /// Human-readable slot description, e.g. "state slot z1" or "parameters".
    pub slot: String,
    #[source]
    pub source: EvalError,
}

fn eval_equations(
    spec: &ModelSpec,
    z: &[Vec<Dual>],
    w: &[Vec<Dual>],
    p: &[Dual],
    slot: &str,
    ndirs: usize,
) -> Result<DMatrix<f64>, JacobianError> {
    let n = spec.n();
    let mut out = DMatrix::zeros(n, ndirs);
    for (e, expr) in spec.equations.iter().enumerate() {
        let v = crate::expr::eval_expr(expr, z, w, p).map_err(|source| JacobianError {
            equation: e,
            slot: slot.to_string(),
            source,
        })?;
        let g = v.grad(ndirs);
        for (j, gj) in g.iter().enumerate() {
            out[(e, j)] = *gj;
        }
    }
    Ok(out)
}

fn const_slots(values: &[f64], copies: usize) -> Vec<Vec<Dual>> {
    (0..copies)
        .map(|_| values.iter().map(|&v| Dual::constant(v)).collect())
        .collect()
}

/// Jacobians of `f` with respect to each delayed-state slot `z_i` and each
/// delayed-input slot `w_j`, evaluated at the equilibrium tuple
/// `E = (x_e, ..., x_e, u_bar, ..., u_bar, p_s)`.
///
/// Returns `l+1` matrices of size n x n and `r+1` matrices of size n x k.
pub fn jacobian_slots(
    spec: &ModelSpec,
    eq: &EquilibriumPoint,
    point: &ParameterPoint,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>), JacobianError> {
    let n = spec.n();
    let k = spec.k();
    let l = spec.l();
    let r = spec.r();
    let p: Vec<Dual> = point.p_s.iter().map(|&v| Dual::constant(v)).collect();

    let mut a = Vec::with_capacity(l + 1);
    for si in 0..=l {
        let mut z = const_slots(&eq.x_e, l + 1);
        z[si] = (0..n).map(|j| Dual::seeded(eq.x_e[j], j, n)).collect();
        let w = const_slots(&point.u_bar, r + 1);
        a.push(eval_equations(spec, &z, &w, &p, &format!("state slot z{si}"), n)?);
    }

    let mut b = Vec::with_capacity(r + 1);
    for wj in 0..=r {
        let z = const_slots(&eq.x_e, l + 1);
        let mut w = const_slots(&point.u_bar, r + 1);
        w[wj] = (0..k).map(|j| Dual::seeded(point.u_bar[j], j, k)).collect();
        b.push(eval_equations(spec, &z, &w, &p, &format!("input slot w{wj}"), k)?);
    }

    Ok((a, b))
}

/// Jacobian of `f` with respect to the physical parameters `P_s` at `E`.
pub fn jacobian_params(
    spec: &ModelSpec,
    eq: &EquilibriumPoint,
    point: &ParameterPoint,
) -> Result<DMatrix<f64>, JacobianError> {
    let np = spec.p();
    let z = const_slots(&eq.x_e, spec.l() + 1);
    let w = const_slots(&point.u_bar, spec.r() + 1);
    let p: Vec<Dual> = (0..np)
        .map(|j| Dual::seeded(point.p_s[j], j, np))
        .collect();
    eval_equations(spec, &z, &w, &p, "parameters", np)
}

/// Jacobian of the collapsed map `x -> f(x, ..., x, u_bar, ..., u_bar, P_s)`
/// (all state slots tied to the same direction), used by the Newton solver.
pub fn jacobian_collapsed(
    spec: &ModelSpec,
    x: &[f64],
    point: &ParameterPoint,
) -> Result<DMatrix<f64>, JacobianError> {
    let n = spec.n();
    let z: Vec<Vec<Dual>> = (0..=spec.l())
        .map(|_| (0..n).map(|j| Dual::seeded(x[j], j, n)).collect())
        .collect();
    let w = const_slots(&point.u_bar, spec.r() + 1);
    let p: Vec<Dual> = point.p_s.iter().map(|&v| Dual::constant(v)).collect();
    eval_equations(spec, &z, &w, &p, "collapsed state", n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Scalar;

    #[test]
    fn product_rule() {
        let x = Dual::seeded(2.0, 0, 2);
        let y = Dual::seeded(3.0, 1, 2);
        let p = x.mul(&y);
        assert_eq!(p.re, 6.0);
        assert_eq!(p.grad(2), vec![3.0, 2.0]);
    }

    #[test]
    fn chain_rule_exactness() {
        // d/dx sin(x^2) at x = 1 equals 2 cos(1).
        let x = Dual::seeded(1.0, 0, 1);
        let v = x.mul(&x).sin();
        let expected = 2.0 * 1.0_f64.cos();
        assert!((v.d[0] - expected).abs() <= 2.0 * f64::EPSILON * expected.abs());
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::seeded(2.0, 0, 1);
        let one = Dual::constant(1.0);
        let v = one.div(&x).unwrap();
        assert!((v.re - 0.5).abs() < 1e-15);
        assert!((v.d[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn abs_kink_is_domain_error() {
        let x = Dual::seeded(0.0, 0, 1);
        assert_eq!(Scalar::abs(&x), Err(NumError::NotDifferentiable));
        assert_eq!(Scalar::abs(&Dual::constant(0.0)), Ok(Dual::constant(0.0)));
    }

    #[test]
    fn powi_is_exact_for_duals() {
        // d/dx x^3 at x = -2 equals 12, via repeated multiplication.
        let x = Dual::seeded(-2.0, 0, 1);
        let v = x.powi(3).unwrap();
        assert_eq!(v.re, -8.0);
        assert_eq!(v.d[0], 12.0);
    }
}
