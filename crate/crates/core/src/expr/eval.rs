use super::{Expr, Func};
use crate::{Error, Result};

impl Func {
    /// Applies the function, or `None` outside its real domain.
    pub fn apply(self, v: f64) -> Option<f64> {
        Some(match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Log if v > 0.0 => v.ln(),
            Func::Sqrt if v >= 0.0 => v.sqrt(),
            Func::Log | Func::Sqrt => return None,
            Func::Asinh => v.asinh(),
            Func::Atan => v.atan(),
        })
    }
}

/// `base^k` with the zero-base / negative-exponent case rejected.
pub(crate) fn int_pow(base: f64, k: i32) -> Option<f64> {
    if k < 0 && base == 0.0 {
        None
    } else {
        Some(base.powi(k))
    }
}

impl Expr {
    /// Evaluates at `point` in IEEE double precision.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let domain = |node: &Expr| Error::Domain {
            node: node.to_string(),
            point: point.to_vec(),
        };
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *point.get(*i).ok_or(Error::Arity {
                index: i + 1,
                arity: point.len(),
            })?,
            Expr::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Expr::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Expr::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Expr::Div(a, b) => {
                let num = a.eval(point)?;
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(domain(self));
                }
                num / den
            }
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Pow(a, k) => int_pow(a.eval(point)?, *k).ok_or_else(|| domain(self))?,
            Expr::Call(f, a) => f.apply(a.eval(point)?).ok_or_else(|| domain(self))?,
        })
    }
}
