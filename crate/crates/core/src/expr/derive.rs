use super::simplify::{add, call, div, mul, neg, powi, sub};
use super::{Expr, Func};

impl Expr {
    /// Exact partial derivative with respect to the zero-based variable `var`.
    ///
    /// The result is built with the simplifying constructors, so constant
    /// branches vanish (`d/dx1 (x1*x2) = x2`).
    pub fn derive(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.derive(var), b.derive(var)),
            Expr::Sub(a, b) => sub(a.derive(var), b.derive(var)),
            Expr::Mul(a, b) => add(
                mul(a.derive(var), b.simplify()),
                mul(a.simplify(), b.derive(var)),
            ),
            Expr::Div(a, b) => {
                let (da, db) = (a.derive(var), b.derive(var));
                if db.is_const(0.0) {
                    return div(da, b.simplify());
                }
                div(
                    sub(mul(da, b.simplify()), mul(a.simplify(), db)),
                    powi(b.simplify(), 2),
                )
            }
            Expr::Neg(a) => neg(a.derive(var)),
            Expr::Pow(a, k) => {
                let da = a.derive(var);
                if *k == 0 || da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                mul(
                    mul(Expr::Const(f64::from(*k)), powi(a.simplify(), k - 1)),
                    da,
                )
            }
            Expr::Call(f, a) => {
                let da = a.derive(var);
                if da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                mul(outer_derivative(*f, a.simplify()), da)
            }
        }
    }

    /// Gradient as one expression per variable.
    pub fn gradient(&self, arity: usize) -> Vec<Expr> {
        (0..arity).map(|v| self.derive(v)).collect()
    }
}

/// f'(u) for the whitelisted functions, expressed within the whitelist.
fn outer_derivative(f: Func, u: Expr) -> Expr {
    match f {
        Func::Sin => call(Func::Cos, u),
        Func::Cos => neg(call(Func::Sin, u)),
        Func::Tan => powi(call(Func::Cos, u), -2),
        Func::Sinh => call(Func::Cosh, u),
        Func::Cosh => call(Func::Sinh, u),
        Func::Tanh => powi(call(Func::Cosh, u), -2),
        Func::Exp => call(Func::Exp, u),
        Func::Log => powi(u, -1),
        Func::Sqrt => div(Expr::Const(0.5), call(Func::Sqrt, u)),
        Func::Asinh => powi(call(Func::Sqrt, add(powi(u, 2), Expr::Const(1.0))), -1),
        Func::Atan => powi(add(Expr::Const(1.0), powi(u, 2)), -1),
    }
}
