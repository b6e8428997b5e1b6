//! Real-valued evaluation of expressions and the sampling identity oracle.

mod oracle;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{Expr, Func, Terminal, Variable};

pub use oracle::{stream_seed, verify, verify_func_eval, verify_identity, Label, OracleConfig, OracleVerdict, Verdict};

/// Variable assignment for evaluation.
pub type Env = BTreeMap<Variable, f64>;

/// Why an expression has no real value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    /// A subterm left its real domain or produced a non-finite value.
    #[error("{0} is outside its domain")]
    Domain(Func),
    #[error("non-finite literal")]
    NonFinite,
    #[error("unbound variable `{0}`")]
    Unbound(Variable),
}

impl EvalError {
    pub fn is_domain_failure(&self) -> bool {
        !matches!(self, EvalError::Unbound(_))
    }
}

/// Applies a unary grammar function under real-arithmetic semantics.
pub fn apply_unary(f: Func, x: f64) -> Option<f64> {
    let v = match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Csc => 1.0 / x.sin(),
        Func::Sec => 1.0 / x.cos(),
        Func::Cot => x.cos() / x.sin(),
        Func::Asin if x.abs() <= 1.0 => x.asin(),
        Func::Acos if x.abs() <= 1.0 => x.acos(),
        Func::Acsc if x.abs() >= 1.0 => (1.0 / x).asin(),
        Func::Asec if x.abs() >= 1.0 => (1.0 / x).acos(),
        Func::Atan => x.atan(),
        // Real branch with range (-pi/2, pi/2] and acot(0) = pi/2.
        Func::Acot => {
            if x == 0.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                (1.0 / x).atan()
            }
        }
        Func::Sinh => x.sinh(),
        Func::Cosh => x.cosh(),
        Func::Tanh => x.tanh(),
        Func::Csch if x != 0.0 => 1.0 / x.sinh(),
        Func::Sech => 1.0 / x.cosh(),
        Func::Coth if x != 0.0 => 1.0 / x.tanh(),
        Func::Asinh => x.asinh(),
        Func::Acosh if x >= 1.0 => x.acosh(),
        Func::Acsch if x != 0.0 => (1.0 / x).asinh(),
        Func::Asech if x > 0.0 && x <= 1.0 => (1.0 / x).acosh(),
        Func::Atanh if x.abs() < 1.0 => x.atanh(),
        Func::Acoth if x.abs() > 1.0 => 0.5 * ((x + 1.0) / (x - 1.0)).ln(),
        Func::Exp => x.exp(),
        Func::Log if x > 0.0 => x.ln(),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

/// Applies a binary grammar function. `0^0 = 1`; a negative base needs an
/// integer exponent.
pub fn apply_binary(f: Func, a: f64, b: f64) -> Option<f64> {
    let v = match f {
        Func::Add => a + b,
        Func::Mul => a * b,
        Func::Pow => {
            if a == 0.0 {
                if b == 0.0 {
                    1.0
                } else if b > 0.0 {
                    0.0
                } else {
                    return None;
                }
            } else if a < 0.0 && b.fract() != 0.0 {
                return None;
            } else {
                a.powf(b)
            }
        }
        Func::Atan2 if !(a == 0.0 && b == 0.0) => a.atan2(b),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

/// Evaluates `e` in double precision.
pub fn eval_expr(e: &Expr, env: &Env) -> Result<f64, EvalError> {
    match e {
        Expr::Leaf(Terminal::Var(v)) => env.get(v).copied().ok_or_else(|| EvalError::Unbound(v.clone())),
        Expr::Leaf(t) => t.value().filter(|v| v.is_finite()).ok_or(EvalError::NonFinite),
        Expr::Apply(f, cs) => match cs.as_slice() {
            [a] => apply_unary(*f, eval_expr(a, env)?).ok_or(EvalError::Domain(*f)),
            [a, b] => {
                let (a, b) = (eval_expr(a, env)?, eval_expr(b, env)?);
                apply_binary(*f, a, b).ok_or(EvalError::Domain(*f))
            }
            _ => unreachable!("arity is checked at construction"),
        },
    }
}

/// Evaluates a closed expression.
pub fn eval_closed(e: &Expr) -> Result<f64, EvalError> {
    eval_expr(e, &Env::new())
}

/// Rounds half away from zero to `digits` decimals (0 to 2).
pub fn round_to_precision(v: f64, digits: u32) -> f64 {
    assert!(digits <= 2, "precision must be 0, 1 or 2");
    let scale = 10f64.powi(digits as i32);
    // Representation error can put an exact tie such as 2.175 just below
    // the midpoint; nudge by a few ulps of the scaled value.
    let s = v * scale;
    let nudged = s + s.signum() * s.abs().max(1.0) * 4.0 * f64::EPSILON;
    nudged.round() / scale
}

/// Rounds to precision 2 and returns the value in hundredths.
pub fn round_to_hundredths(v: f64) -> i64 {
    (round_to_precision(v, 2) * 100.0).round() as i64
}
