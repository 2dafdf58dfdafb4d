//! Expression trees for the model right-hand side.
//!
//! Trees reference state slots `z_i` (i = 0 undelayed), input slots `w_j`
//! and parameter slots by index; the surface syntax is handled in
//! [`crate::parse`]. Evaluation is generic over the numeric type so the same
//! trees serve plain evaluation and dual-number differentiation.

use serde::Serialize;

use crate::num::{NumError, Scalar};

/// Byte range into the model source, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub begin: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(begin: usize, end: usize) -> Self {
        debug_assert!(begin <= end);
        SourceSpan { begin, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnOp {
    pub fn name(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Sin => "sin",
            UnOp::Cos => "cos",
            UnOp::Exp => "exp",
            UnOp::Log => "log",
            UnOp::Sqrt => "sqrt",
            UnOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64, SourceSpan),
    /// State slot reference: `delay` 0 is the undelayed state.
    State {
        state: usize,
        delay: usize,
        span: SourceSpan,
    },
    /// Input slot reference: `delay` 0 is the undelayed input.
    Input {
        input: usize,
        delay: usize,
        span: SourceSpan,
    },
    Param {
        idx: usize,
        span: SourceSpan,
    },
    Unary {
        op: UnOp,
        arg: Box<Expr>,
        span: SourceSpan,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: SourceSpan,
    },
}

impl Expr {
    pub fn span(&self) -> SourceSpan {
        match self {
            Expr::Const(_, s) => *s,
            Expr::State { span, .. }
            | Expr::Input { span, .. }
            | Expr::Param { span, .. }
            | Expr::Unary { span, .. }
            | Expr::Binary { span, .. } => *span,
        }
    }

    /// Walk all nodes, calling `f` on each.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary { arg, .. } => arg.visit(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            _ => {}
        }
    }
}

/// Evaluation failure with the offending node's span.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind} at bytes {}..{}", span.begin, span.end)]
pub struct EvalError {
    pub kind: NumError,
    pub span: SourceSpan,
}

/// Evaluate `e` with state slots `z`, input slots `w` and parameters `p`.
///
/// Integer-constant exponents go through repeated multiplication so that
/// `x^2` is defined for any base; other exponents use `exp(e ln b)`.
pub fn eval_expr<N: Scalar>(e: &Expr, z: &[Vec<N>], w: &[Vec<N>], p: &[N]) -> Result<N, EvalError> {
    match e {
        Expr::Const(v, _) => Ok(N::lift(*v)),
        Expr::State { state, delay, .. } => Ok(z[*delay][*state].clone()),
        Expr::Input { input, delay, .. } => Ok(w[*delay][*input].clone()),
        Expr::Param { idx, .. } => Ok(p[*idx].clone()),
        Expr::Unary { op, arg, span } => {
            let a = eval_expr(arg, z, w, p)?;
            let err = |kind| EvalError { kind, span: *span };
            match op {
                UnOp::Neg => Ok(a.neg()),
                UnOp::Sin => Ok(a.sin()),
                UnOp::Cos => Ok(a.cos()),
                UnOp::Exp => Ok(a.exp()),
                UnOp::Log => a.ln().map_err(err),
                UnOp::Sqrt => a.sqrt().map_err(err),
                UnOp::Abs => a.abs().map_err(err),
            }
        }
        Expr::Binary { op, lhs, rhs, span } => {
            let a = eval_expr(lhs, z, w, p)?;
            let err = |kind| EvalError { kind, span: *span };
            match op {
                BinOp::Add => Ok(a.add(&eval_expr(rhs, z, w, p)?)),
                BinOp::Sub => Ok(a.sub(&eval_expr(rhs, z, w, p)?)),
                BinOp::Mul => Ok(a.mul(&eval_expr(rhs, z, w, p)?)),
                BinOp::Div => a.div(&eval_expr(rhs, z, w, p)?).map_err(err),
                BinOp::Pow => {
                    if let Expr::Const(c, _) = rhs.as_ref() {
                        if c.fract() == 0.0 && f64::abs(*c) <= 64.0 {
                            return a.powi(*c as i64).map_err(err);
                        }
                    }
                    let b = eval_expr(rhs, z, w, p)?;
                    a.powf(&b).map_err(err)
                }
            }
        }
    }
}

fn precedence(op: BinOp) -> u8 {
    match op {
        BinOp::Add | BinOp::Sub => 1,
        BinOp::Mul | BinOp::Div => 2,
        BinOp::Pow => 4,
    }
}

/// Render the expression using names supplied by the model header; reparses
/// to a structurally identical tree.
pub fn pretty_print(
    e: &Expr,
    state_names: &[String],
    input_names: &[String],
    param_names: &[String],
    tau_names: &[String],
    nu_names: &[String],
) -> String {
    fn go(
        e: &Expr,
        parent_prec: u8,
        names: &(&[String], &[String], &[String], &[String], &[String]),
        out: &mut String,
    ) {
        let (states, inputs, params, taus, nus) = *names;
        match e {
            Expr::Const(v, _) => {
                if *v < 0.0 {
                    out.push_str(&format!("({v})"));
                } else {
                    out.push_str(&format!("{v}"));
                }
            }
            Expr::State { state, delay, .. } => {
                if *delay == 0 {
                    out.push_str(&states[*state]);
                } else {
                    out.push_str(&format!("delay({}, {})", states[*state], taus[*delay - 1]));
                }
            }
            Expr::Input { input, delay, .. } => {
                if *delay == 0 {
                    out.push_str(&inputs[*input]);
                } else {
                    out.push_str(&format!("delay({}, {})", inputs[*input], nus[*delay - 1]));
                }
            }
            Expr::Param { idx, .. } => out.push_str(&params[*idx]),
            Expr::Unary { op, arg, .. } => {
                if *op == UnOp::Neg {
                    // unary minus binds looser than ^, tighter than * and +
                    let needs = parent_prec > 3;
                    if needs {
                        out.push('(');
                    }
                    out.push('-');
                    go(arg, 3, names, out);
                    if needs {
                        out.push(')');
                    }
                } else {
                    out.push_str(op.name());
                    out.push('(');
                    go(arg, 0, names, out);
                    out.push(')');
                }
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                let prec = precedence(*op);
                let needs = prec < parent_prec || (*op == BinOp::Pow && parent_prec == 4);
                if needs {
                    out.push('(');
                }
                // left operand of a right-associative ^ must re-parenthesize
                let (lp, rp) = match op {
                    BinOp::Pow => (prec + 1, prec),
                    _ => (prec, prec + 1),
                };
                go(lhs, lp, names, out);
                out.push_str(match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                });
                go(rhs, rp, names, out);
                if needs {
                    out.push(')');
                }
            }
        }
    }
    let mut out = String::new();
    go(
        e,
        0,
        &(state_names, input_names, param_names, tau_names, nu_names),
        &mut out,
    );
    out
}
