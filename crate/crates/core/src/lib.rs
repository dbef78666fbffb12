//! Quantum point transformations on grids.
//!
//! Given a global diffeomorphism `X = f(x)` of ℝⁿ written in a small
//! expression language, this crate builds the position operators `X_α`
//! (multiplication by `f_α`) and the symmetrized momenta
//! `P_α = ½ Σ_β (c_{βα} p_β + p_β c_{βα})`, `c_{βα} = ∂x_β/∂X_α`, on
//! truncated lattices, together with the change-of-variables unitary
//! `(Uu)(X) = u(x(X)) / √J(x(X))`. The [`verify`] module turns the
//! expected properties of these operators (hermiticity, canonical
//! commutation relations, unitary equivalence with flat momenta,
//! non-normalizable deficiency candidates, spectra filling the line) into
//! quantified checks.

pub mod config;
pub mod diffeo;
pub mod error;
pub mod expr;
pub mod grid;
pub mod linop;
pub mod operators;
pub mod verify;

pub use diffeo::{DiffeoMap, JacobianData, ValidationReport};
pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::{BumpSpec, Grid, GridFunction};
pub use linop::LinearOperator;
pub use num_complex::Complex64;
