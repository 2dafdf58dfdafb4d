//! Generic numeric interface used by expression evaluation.
//!
//! The same expression trees are evaluated over plain `f64` (simulation,
//! residuals) and over [`crate::dual::Dual`] (Jacobians), so the arithmetic
//! surface is abstracted into a small trait.

use serde::Serialize;

/// Domain failures of partial operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NumError {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    /// pow with a non-integer exponent requires a strictly positive base.
    PowNonPositiveBase,
    /// Differentiation hit a kink (abs or sqrt exactly at zero).
    NotDifferentiable,
}

impl std::fmt::Display for NumError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let msg = match self {
            NumError::DivisionByZero => "division by zero",
            NumError::LogNonPositive => "log of a non-positive value",
            NumError::SqrtNegative => "sqrt of a negative value",
            NumError::PowNonPositiveBase => "non-integer power of a non-positive base",
            NumError::NotDifferentiable => "expression not differentiable at this point",
        };
        f.write_str(msg)
    }
}

/// Arithmetic and transcendental interface shared by `f64` and dual numbers.
pub trait Scalar: Clone {
    fn lift(v: f64) -> Self;
    /// Value part (real part for duals).
    fn re(&self) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, NumError>;

    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Result<Self, NumError>;
    fn sqrt(&self) -> Result<Self, NumError>;
    fn abs(&self) -> Result<Self, NumError>;

    /// Integer power by repeated multiplication (exact for duals, works for
    /// any base including negatives and zero).
    fn powi(&self, n: i64) -> Result<Self, NumError> {
        if n == 0 {
            return Ok(Self::lift(1.0));
        }
        let mut acc = Self::lift(1.0);
        let mut base = self.clone();
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        if n < 0 {
            Self::lift(1.0).div(&acc)
        } else {
            Ok(acc)
        }
    }

    /// Real power via `exp(e * ln(base))`; requires a positive base.
    fn powf(&self, e: &Self) -> Result<Self, NumError> {
        if self.re() <= 0.0 {
            return Err(NumError::PowNonPositiveBase);
        }
        Ok(self.ln()?.mul(e).exp())
    }
}

impl Scalar for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, o: &Self) -> Result<Self, NumError> {
        if *o == 0.0 {
            Err(NumError::DivisionByZero)
        } else {
            Ok(self / o)
        }
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Result<Self, NumError> {
        if *self <= 0.0 {
            Err(NumError::LogNonPositive)
        } else {
            Ok(f64::ln(*self))
        }
    }
    fn sqrt(&self) -> Result<Self, NumError> {
        if *self < 0.0 {
            Err(NumError::SqrtNegative)
        } else {
            Ok(f64::sqrt(*self))
        }
    }
    fn abs(&self) -> Result<Self, NumError> {
        Ok(f64::abs(*self))
    }
}
