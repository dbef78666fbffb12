use std::fmt;

use super::Expr;

// Binding strength, loosest first.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => UNARY,
        Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => ATOM,
        Expr::Add(..) | Expr::Sub(..) => SUM,
        Expr::Mul(..) | Expr::Div(..) => PRODUCT,
        Expr::Neg(_) => UNARY,
        Expr::Pow(..) => POWER,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        f.write_str("(")?;
        write_expr(f, e)?;
        f.write_str(")")
    } else {
        write_expr(f, e)
    }
}

/// Writes text that `parse` reads back into the same tree (negative
/// constants come back as `Neg(Const)`, which `simplify` folds).
pub(super) fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(c) if c.is_sign_negative() => write!(f, "-{}", -c),
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Var(i) => write!(f, "x{}", i + 1),
        Expr::Add(a, b) => {
            child(f, a, SUM)?;
            f.write_str(" + ")?;
            child(f, b, PRODUCT)
        }
        Expr::Sub(a, b) => {
            child(f, a, SUM)?;
            f.write_str(" - ")?;
            child(f, b, PRODUCT)
        }
        Expr::Mul(a, b) => {
            child(f, a, PRODUCT)?;
            f.write_str("*")?;
            child(f, b, UNARY)
        }
        Expr::Div(a, b) => {
            child(f, a, PRODUCT)?;
            f.write_str("/")?;
            child(f, b, UNARY)
        }
        Expr::Neg(a) => {
            f.write_str("-")?;
            child(f, a, UNARY)
        }
        Expr::Pow(a, k) => {
            child(f, a, ATOM)?;
            write!(f, "^{k}")
        }
        Expr::Call(func, a) => {
            write!(f, "{func}(")?;
            write_expr(f, a)?;
            f.write_str(")")
        }
    }
}
