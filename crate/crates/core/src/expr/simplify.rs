//! Local rewriting: constant folding and unit/zero identities.
//!
//! The smart constructors here are also what `derive` builds with, so
//! derivative trees come out already folded. Every rule is exact in floating
//! point: no reassociation, so simplified trees evaluate bit-for-bit like the
//! original wherever the original is defined.

use super::eval::int_pow;
use super::{Expr, Func};

fn folded(v: Option<f64>) -> Option<Expr> {
    v.filter(|v| v.is_finite()).map(Expr::Const)
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => folded(Some(x + y)).unwrap_or(a + b),
        _ if a.is_const(0.0) => b,
        _ if b.is_const(0.0) => a,
        (_, Expr::Neg(inner)) => sub(a, (**inner).clone()),
        _ => a + b,
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => folded(Some(x - y)).unwrap_or(a - b),
        _ if b.is_const(0.0) => a,
        _ if a.is_const(0.0) => neg(b),
        _ => a - b,
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => folded(Some(x * y)).unwrap_or(a * b),
        _ if a.is_const(0.0) || b.is_const(0.0) => Expr::Const(0.0),
        _ if a.is_const(1.0) => b,
        _ if b.is_const(1.0) => a,
        _ if a.is_const(-1.0) => neg(b),
        _ if b.is_const(-1.0) => neg(a),
        // keep constants on the left
        (_, Expr::Const(_)) => mul(b, a),
        _ => a * b,
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => folded(Some(x / y)).unwrap_or(a / b),
        _ if b.is_const(1.0) => a,
        _ if a.is_const(0.0) => Expr::Const(0.0),
        _ => a / b,
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        a => -a,
    }
}

pub(crate) fn powi(a: Expr, k: i32) -> Expr {
    match (&a, k) {
        (_, 0) => Expr::Const(1.0),
        (_, 1) => a,
        (Expr::Const(x), _) => folded(int_pow(*x, k)).unwrap_or(a.powi(k)),
        _ => a.powi(k),
    }
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    match &a {
        Expr::Const(x) => folded(f.apply(*x)).unwrap_or(a.call(f)),
        _ => a.call(f),
    }
}

impl Expr {
    /// Bottom-up constant folding and identity removal.
    ///
    /// Agrees with `self` under `eval` wherever both are defined; rules such
    /// as `0*e -> 0` may enlarge the domain.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(a, b) => add(a.simplify(), b.simplify()),
            Expr::Sub(a, b) => sub(a.simplify(), b.simplify()),
            Expr::Mul(a, b) => mul(a.simplify(), b.simplify()),
            Expr::Div(a, b) => div(a.simplify(), b.simplify()),
            Expr::Neg(a) => neg(a.simplify()),
            Expr::Pow(a, k) => powi(a.simplify(), *k),
            Expr::Call(f, a) => call(*f, a.simplify()),
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::testgen::arb_expr;
    use crate::expr::{parse, Expr};
    use proptest::prelude::*;

    #[test]
    fn zero_times_anything() {
        assert_eq!(parse("0 * cosh(x1)", 1).unwrap().simplify(), Expr::Const(0.0));
    }

    #[test]
    fn unit_and_zero_identities() {
        assert_eq!(parse("1 * x2 + 0", 2).unwrap().simplify(), Expr::Var(1));
        assert_eq!(parse("x1^1", 1).unwrap().simplify(), Expr::Var(0));
        assert_eq!(parse("--x1", 1).unwrap().simplify(), Expr::Var(0));
        assert_eq!(parse("2*3 + 1", 1).unwrap().simplify(), Expr::Const(7.0));
    }

    #[test]
    fn no_deep_cancellation() {
        let e = parse("x1 - x1", 1).unwrap();
        assert_eq!(e.simplify(), e);
    }

    #[test]
    fn undefined_constants_are_not_folded() {
        let e = parse("log(0 - 1)", 1).unwrap().simplify();
        assert!(matches!(e, Expr::Call(..)));
        assert!(e.eval(&[0.0]).is_err());
        let e = parse("1/0", 1).unwrap().simplify();
        assert!(matches!(e, Expr::Div(..)));
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) || (a.is_nan() && b.is_nan())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn simplify_preserves_value(
            e in arb_expr(3, 8),
            points in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 100),
        ) {
            let s = e.simplify();
            for p in &points {
                if let (Ok(a), Ok(b)) = (e.eval(p), s.eval(p)) {
                    if a.is_finite() && b.is_finite() {
                        prop_assert!(close(a, b), "{e} vs {s} at {p:?}: {a} != {b}");
                    }
                }
            }
        }
    }
}
