//! Symbolic expressions over `n` real variables.
//!
//! Expressions are plain immutable trees. Variables are stored zero-based
//! (`Expr::Var(0)` prints as `x1`); the text grammar is one-based.
//!
//! ```
//! use qpt::expr::{parse, Expr};
//!
//! let e = parse("sinh(x1) * x2", 2).unwrap();
//! let d = e.derive(0);
//! assert_eq!(d.to_string(), "cosh(x1)*x2");
//! assert_eq!(d.eval(&[0.0, 3.0]).unwrap(), 3.0);
//! ```

mod derive;
mod eval;
mod parse;
mod print;
mod simplify;

use std::fmt;
use std::ops;

pub use parse::parse;
pub(crate) use simplify::{add, div, mul, neg, sub};

/// The whitelisted unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Asinh,
    Atan,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Asinh,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Asinh => "asinh",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn powi(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    pub fn call(self, f: Func) -> Expr {
        Expr::Call(f, Box::new(self))
    }

    pub fn is_const(&self, c: f64) -> bool {
        matches!(self, Expr::Const(v) if *v == c)
    }

    /// One plus the largest variable index used, or 0 for closed expressions.
    pub fn min_arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.min_arity().max(b.min_arity())
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.min_arity(),
        }
    }

    /// Height of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.depth(),
        }
    }

    /// Fails with [`Error::Arity`](crate::Error::Arity) if a variable exceeds `arity`.
    pub fn check_arity(&self, arity: usize) -> crate::Result<()> {
        let needed = self.min_arity();
        if needed > arity {
            return Err(crate::Error::Arity {
                index: needed,
                arity,
            });
        }
        Ok(())
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_expr(f, self)
    }
}

// Raw (non-simplifying) tree constructors.
impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
pub(crate) mod testgen;
