//! Point transformations `X = f(x)` of ℝⁿ and everything derived from their
//! Jacobian.
//!
//! All derivatives are symbolic and cached at construction; evaluation at a
//! point is purely numeric. The divergence `b_α = Σ_β ∂/∂x_β (∂x_β/∂X_α)` is
//! available through two independent routes:
//!
//! * [`DiffeoMap::divergence_direct`] differentiates the inverse Jacobian
//!   through `∂(A⁻¹) = -A⁻¹ (∂A) A⁻¹` using second derivatives of `f`;
//! * [`DiffeoMap::divergence_via_lemma`] uses `b_α = -J⁻¹ ∂J/∂X_α` with the
//!   gradient of the symbolically expanded determinant.

use nalgebra::DMatrix;

use crate::expr::{self, parse, Expr};
use crate::{Error, Result};

/// Default positivity margin for the Jacobian determinant.
pub const DEFAULT_J_MIN: f64 = 1e-8;

/// Largest dimension for which the determinant is expanded symbolically.
pub const SYMBOLIC_DET_MAX_DIM: usize = 4;

const NEWTON_MAX_ITERATIONS: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone)]
pub struct DiffeoMap {
    dim: usize,
    forward: Vec<Expr>,
    inverse: Option<Vec<Expr>>,
    j_min: f64,
    /// `jacobian[α][β] = ∂f_α/∂x_β`
    jacobian: Vec<Vec<Expr>>,
    /// `hessian[α][β][γ] = ∂²f_α/∂x_β∂x_γ`
    hessian: Vec<Vec<Vec<Expr>>>,
    det: Option<Expr>,
    det_gradient: Option<Vec<Expr>>,
}

/// Everything the Jacobian says about `f` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianData {
    pub point: Vec<f64>,
    /// `df[(α, β)] = ∂X_α/∂x_β`
    pub df: DMatrix<f64>,
    pub det_j: f64,
    /// `inv_df[(β, α)] = ∂x_β/∂X_α`
    pub inv_df: DMatrix<f64>,
    /// `divergence[α] = Σ_β ∂/∂x_β (∂x_β/∂X_α)`
    pub divergence: Vec<f64>,
}

impl DiffeoMap {
    /// Validates arities and precomputes first and second derivatives.
    pub fn new(
        dim: usize,
        forward: Vec<Expr>,
        inverse: Option<Vec<Expr>>,
        j_min: f64,
    ) -> Result<DiffeoMap> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        if !(j_min > 0.0 && j_min.is_finite()) {
            return Err(Error::config("j_min", format!("must be positive, got {j_min}")));
        }
        for comps in std::iter::once(&forward).chain(inverse.as_ref()) {
            if comps.len() != dim {
                return Err(Error::ComponentCount {
                    expected: dim,
                    found: comps.len(),
                });
            }
            for e in comps {
                e.check_arity(dim)?;
            }
        }
        let jacobian: Vec<Vec<Expr>> = forward.iter().map(|f| f.gradient(dim)).collect();
        let hessian = jacobian
            .iter()
            .map(|row| row.iter().map(|d| d.gradient(dim)).collect())
            .collect();
        let det = (dim <= SYMBOLIC_DET_MAX_DIM).then(|| symbolic_det(&jacobian));
        let det_gradient = det.as_ref().map(|d| d.gradient(dim));
        Ok(DiffeoMap {
            dim,
            forward,
            inverse,
            j_min,
            jacobian,
            hessian,
            det,
            det_gradient,
        })
    }

    /// Parses component strings over `x1..x<dim>`.
    pub fn parse(
        dim: usize,
        forward: &[&str],
        inverse: Option<&[&str]>,
        j_min: f64,
    ) -> Result<DiffeoMap> {
        let parse_all = |texts: &[&str]| -> Result<Vec<Expr>> {
            texts.iter().map(|t| parse(t, dim)).collect()
        };
        let forward = parse_all(forward)?;
        let inverse = inverse.map(parse_all).transpose()?;
        DiffeoMap::new(dim, forward, inverse, j_min)
    }

    pub fn identity(dim: usize) -> DiffeoMap {
        let vars: Vec<Expr> = (0..dim).map(Expr::Var).collect();
        DiffeoMap::new(dim, vars.clone(), Some(vars), DEFAULT_J_MIN).expect("identity map is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn j_min(&self) -> f64 {
        self.j_min
    }

    pub fn forward(&self) -> &[Expr] {
        &self.forward
    }

    pub fn inverse(&self) -> Option<&[Expr]> {
        self.inverse.as_deref()
    }

    /// `∂f_α/∂x_β` as expressions.
    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    /// Symbolically expanded `J(x)`, for dimensions up to 4.
    pub fn det_expr(&self) -> Option<&Expr> {
        self.det.as_ref()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point of length {} for a map of dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `f(x)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.forward.iter().map(|f| f.eval(x)).collect()
    }

    fn eval_df(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut df = DMatrix::zeros(self.dim, self.dim);
        for (a, row) in self.jacobian.iter().enumerate() {
            for (b, e) in row.iter().enumerate() {
                df[(a, b)] = e.eval(x)?;
            }
        }
        Ok(df)
    }

    /// `dA[β][(γ, δ)] = ∂/∂x_β (∂f_γ/∂x_δ)`.
    pub fn jacobian_derivatives_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let mut out = vec![DMatrix::zeros(n, n); n];
        for (g, plane) in self.hessian.iter().enumerate() {
            for (d, row) in plane.iter().enumerate() {
                for (b, e) in row.iter().enumerate() {
                    out[b][(g, d)] = e.eval(x)?;
                }
            }
        }
        Ok(out)
    }

    /// LU factorization of `Df(x)`, rejecting `det ≤ j_min` (and NaN).
    fn factor(&self, x: &[f64]) -> Result<(DMatrix<f64>, f64, DMatrix<f64>)> {
        self.check_point(x)?;
        let df = self.eval_df(x)?;
        let lu = df.clone().lu();
        let det = lu.determinant();
        if !(det > self.j_min) || !det.is_finite() {
            return Err(Error::SingularJacobian {
                point: x.to_vec(),
                det,
            });
        }
        let inv = lu.try_inverse().ok_or_else(|| Error::SingularJacobian {
            point: x.to_vec(),
            det,
        })?;
        Ok((df, det, inv))
    }

    /// `J(x)`, failing when it does not exceed `j_min`.
    pub fn det_at(&self, x: &[f64]) -> Result<f64> {
        self.factor(x).map(|(_, det, _)| det)
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Result<JacobianData> {
        let (df, det_j, inv_df) = self.factor(x)?;
        let derivs = self.jacobian_derivatives_at(x)?;
        let divergence = divergence_from_parts(&inv_df, &derivs);
        Ok(JacobianData {
            point: x.to_vec(),
            df,
            det_j,
            inv_df,
            divergence,
        })
    }

    /// `b_α` via the derivative of the matrix inverse.
    pub fn divergence_direct(&self, x: &[f64], alpha: usize) -> Result<f64> {
        self.check_index(alpha)?;
        let (_, _, inv) = self.factor(x)?;
        let derivs = self.jacobian_derivatives_at(x)?;
        Ok(divergence_component(&inv, &derivs, alpha))
    }

    /// `b_α = -J⁻¹ Σ_β (∂x_β/∂X_α) ∂J/∂x_β` with `J` expanded symbolically.
    pub fn divergence_via_lemma(&self, x: &[f64], alpha: usize) -> Result<f64> {
        self.check_index(alpha)?;
        let (Some(det), Some(grad)) = (&self.det, &self.det_gradient) else {
            return Err(Error::Dimension(format!(
                "symbolic determinant expansion is implemented for n <= {SYMBOLIC_DET_MAX_DIM}, got n = {}",
                self.dim
            )));
        };
        let (_, _, inv) = self.factor(x)?;
        let j = det.eval(x)?;
        let mut acc = 0.0;
        for (b, dj) in grad.iter().enumerate() {
            acc += inv[(b, alpha)] * dj.eval(x)?;
        }
        Ok(-acc / j)
    }

    fn check_index(&self, alpha: usize) -> Result<()> {
        if alpha >= self.dim {
            return Err(Error::Dimension(format!(
                "component index {} out of range for dimension {}",
                alpha + 1,
                self.dim
            )));
        }
        Ok(())
    }

    /// `x = f⁻¹(X)`: evaluates the symbolic inverse when one was given,
    /// otherwise runs damped Newton from `seed`.
    pub fn invert_point(&self, target: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
        self.check_point(target)?;
        if let Some(inv) = &self.inverse {
            return inv.iter().map(|g| g.eval(target)).collect();
        }
        self.newton(target, seed)
    }

    /// Damped Newton iteration on `f(x) = X`, ignoring any symbolic inverse.
    pub fn newton(&self, target: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
        self.check_point(target)?;
        self.check_point(seed)?;
        let tol = 1e-12 * (1.0 + max_abs(target));
        let residual = |x: &[f64]| -> Option<(Vec<f64>, f64)> {
            let fx = self.apply(x).ok()?;
            let r: Vec<f64> = target.iter().zip(&fx).map(|(t, v)| t - v).collect();
            let norm = max_abs(&r);
            norm.is_finite().then_some((r, norm))
        };
        let mut x = seed.to_vec();
        let (mut r, mut norm) = residual(&x).ok_or_else(|| Error::Domain {
            node: "f".into(),
            point: x.clone(),
        })?;
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if norm <= tol {
                return Ok(x);
            }
            let (_, _, inv) = self.factor(&x)?;
            let step = &inv * nalgebra::DVector::from_column_slice(&r);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..NEWTON_MAX_HALVINGS {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                if let Some((r_new, n_new)) = residual(&trial) {
                    if n_new < norm {
                        x = trial;
                        r = r_new;
                        norm = n_new;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if norm <= tol {
            return Ok(x);
        }
        Err(Error::Convergence {
            iterations: NEWTON_MAX_ITERATIONS,
            residual: norm,
        })
    }

    /// Samples a lattice of `samples_per_axis` points per axis (endpoints
    /// included) and records every point where `f` fails to look like an
    /// orientation-preserving diffeomorphism.
    pub fn validate_global(&self, bounds: &[(f64, f64)], samples_per_axis: usize) -> ValidationReport {
        let n = self.dim;
        let mut violations = Vec::new();
        let per_axis = samples_per_axis.max(2);
        let total = if bounds.len() == n {
            per_axis.pow(n as u32)
        } else {
            violations.push(Violation {
                point: Vec::new(),
                kind: ViolationKind::Malformed(format!(
                    "box has {} axes, map has dimension {n}",
                    bounds.len()
                )),
            });
            0
        };
        for k in 0..total {
            let mut rem = k;
            let mut x = vec![0.0; n];
            for axis in (0..n).rev() {
                let i = rem % per_axis;
                rem /= per_axis;
                let (a, b) = bounds[axis];
                x[axis] = a + (b - a) * i as f64 / (per_axis - 1) as f64;
            }
            if let Some(kind) = self.inspect(&x) {
                violations.push(Violation { point: x, kind });
            }
        }
        ValidationReport {
            samples: total,
            violations,
        }
    }

    fn inspect(&self, x: &[f64]) -> Option<ViolationKind> {
        let det = match self.eval_df(x) {
            Ok(df) => df.determinant(),
            Err(_) => return Some(ViolationKind::SingularJacobian { det: None }),
        };
        if !(det > self.j_min) || !det.is_finite() {
            return Some(ViolationKind::SingularJacobian {
                det: det.is_finite().then_some(det),
            });
        }
        let fx = match self.apply(x) {
            Ok(v) if v.iter().all(|c| c.is_finite()) => v,
            Ok(_) => return Some(ViolationKind::NonFinite("f(x) overflowed".into())),
            Err(e) => return Some(ViolationKind::NonFinite(e.to_string())),
        };
        if let Some(inv) = &self.inverse {
            let back: std::result::Result<Vec<f64>, _> = inv.iter().map(|g| g.eval(&fx)).collect();
            match back {
                Ok(back) => {
                    let err = back
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if !(err <= 1e-9 * (1.0 + max_abs(x))) {
                        return Some(ViolationKind::InverseMismatch { error: err });
                    }
                }
                Err(e) => return Some(ViolationKind::NonFinite(format!("inverse: {e}"))),
            }
        }
        None
    }
}

/// Determinant of an expression matrix by cofactor expansion along the
/// first row.
pub(crate) fn symbolic_det(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Expr::Const(0.0);
    for j in 0..n {
        let minor: Vec<Vec<Expr>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let term = expr::mul(m[0][j].clone(), symbolic_det(&minor));
        acc = if j % 2 == 0 {
            expr::add(acc, term)
        } else {
            expr::sub(acc, term)
        };
    }
    acc
}

/// Cofactor `(-1)^(i+j) det(minor_ij)` of an expression matrix.
pub(crate) fn symbolic_cofactor(m: &[Vec<Expr>], i: usize, j: usize) -> Expr {
    if m.len() == 1 {
        return Expr::Const(1.0);
    }
    let minor: Vec<Vec<Expr>> = m
        .iter()
        .enumerate()
        .filter(|(r, _)| *r != i)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(c, _)| *c != j)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect();
    let d = symbolic_det(&minor);
    if (i + j).is_multiple_of(2) {
        d
    } else {
        expr::neg(d)
    }
}

fn divergence_component(inv: &DMatrix<f64>, derivs: &[DMatrix<f64>], alpha: usize) -> f64 {
    // b_α = -Σ_β (A⁻¹ ∂_β A A⁻¹)[β][α]
    let mut acc = 0.0;
    for (b, da) in derivs.iter().enumerate() {
        let col = da * inv.column(alpha);
        acc += inv.row(b).dot(&col.transpose());
    }
    -acc
}

fn divergence_from_parts(inv: &DMatrix<f64>, derivs: &[DMatrix<f64>]) -> Vec<f64> {
    (0..inv.ncols())
        .map(|a| divergence_component(inv, derivs, a))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// `J ≤ j_min`; `det` is `None` where the Jacobian itself is undefined.
    SingularJacobian { det: Option<f64> },
    /// `g(f(x))` differs from `x` by more than `1e-9` (relative).
    InverseMismatch { error: f64 },
    NonFinite(String),
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub point: Vec<f64>,
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ViolationKind::SingularJacobian { det: Some(d) } => {
                write!(f, "SingularJacobian at {:?}: J = {d:e}", self.point)
            }
            ViolationKind::SingularJacobian { det: None } => {
                write!(f, "SingularJacobian at {:?}: Jacobian undefined", self.point)
            }
            ViolationKind::InverseMismatch { error } => {
                write!(f, "inverse mismatch at {:?}: |g(f(x)) - x| = {error:e}", self.point)
            }
            ViolationKind::NonFinite(why) => write!(f, "f not finite at {:?}: {why}", self.point),
            ViolationKind::Malformed(why) => write!(f, "malformed validation request: {why}"),
        }
    }
}

/// Outcome of lattice sampling. A pass is evidence, not proof.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.samples > 0
    }

    pub fn singular_points(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v.kind, ViolationKind::SingularJacobian { .. }))
    }

    pub fn summary(&self) -> String {
        if self.passed() {
            format!(
                "no violations at {} samples (evidence of a diffeomorphism on the box, not proof)",
                self.samples
            )
        } else {
            let singular = self.singular_points().count();
            format!(
                "{} violations at {} samples ({singular} SingularJacobian, {} other)",
                self.violations.len(),
                self.samples,
                self.violations.len() - singular
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sinh_map() -> DiffeoMap {
        DiffeoMap::parse(1, &["sinh(x1)"], Some(&["asinh(x1)"]), DEFAULT_J_MIN).unwrap()
    }

    fn shear_map() -> DiffeoMap {
        DiffeoMap::parse(2, &["sinh(x1)", "x2 + x1"], None, DEFAULT_J_MIN).unwrap()
    }

    /// Composition of two triangular maps, so both divergence components
    /// are nonzero and depend on both coordinates.
    fn coupled_map() -> DiffeoMap {
        DiffeoMap::parse(
            2,
            &["sinh(x1) + sin(x2)", "x2 + 0.5*tanh(sinh(x1) + sin(x2))"],
            Some(&["asinh(x1 - sin(x2 - 0.5*tanh(x1)))", "x2 - 0.5*tanh(x1)"]),
            DEFAULT_J_MIN,
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(DiffeoMap::parse(2, &["x1", "x2"], None, DEFAULT_J_MIN).is_ok());
        assert!(DiffeoMap::parse(1, &["sinh(x1)"], Some(&["asinh(x1)"]), DEFAULT_J_MIN).is_ok());
        assert_eq!(
            DiffeoMap::parse(3, &["x1", "x2"], None, DEFAULT_J_MIN).unwrap_err(),
            Error::ComponentCount {
                expected: 3,
                found: 2
            }
        );
        assert!(matches!(
            DiffeoMap::parse(1, &["x1"], None, 0.0),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            DiffeoMap::new(1, vec![Expr::Var(1)], None, DEFAULT_J_MIN),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn identity_jacobian() {
        let m = DiffeoMap::identity(2);
        let d = m.jacobian_at(&[0.3, -7.0]).unwrap();
        assert_eq!(d.df, DMatrix::identity(2, 2));
        assert_eq!(d.det_j, 1.0);
        assert_eq!(d.inv_df, DMatrix::identity(2, 2));
        assert_eq!(d.divergence, vec![0.0, 0.0]);
    }

    #[test]
    fn sinh_jacobian_at_origin() {
        let d = sinh_map().jacobian_at(&[0.0]).unwrap();
        assert_eq!(d.df[(0, 0)], 1.0);
        assert_eq!(d.det_j, 1.0);
        assert_eq!(d.divergence, vec![0.0]);
    }

    #[test]
    fn shear_jacobian_against_independent_values() {
        let x = [0.7, -1.3];
        let d = shear_map().jacobian_at(&x).unwrap();
        assert!((d.det_j - 0.7f64.cosh()).abs() < 1e-15);
        let prod = &d.df * &d.inv_df;
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-10);
        // divergence against centered differences of the inverse Jacobian
        let h = 1e-5;
        let inv_at = |p: [f64; 2]| shear_map().jacobian_at(&p).unwrap().inv_df;
        for a in 0..2 {
            let mut fd = 0.0;
            for b in 0..2 {
                let mut plus = x;
                let mut minus = x;
                plus[b] += h;
                minus[b] -= h;
                fd += (inv_at(plus)[(b, a)] - inv_at(minus)[(b, a)]) / (2.0 * h);
            }
            assert!((d.divergence[a] - fd).abs() < 1e-8, "{a}: {} vs {fd}", d.divergence[a]);
        }
    }

    #[test]
    fn singular_jacobian_rejected() {
        let cube = DiffeoMap::parse(1, &["x1^3"], None, DEFAULT_J_MIN).unwrap();
        assert!(matches!(
            cube.jacobian_at(&[0.0]),
            Err(Error::SingularJacobian { .. })
        ));
        let flip = DiffeoMap::parse(1, &["-x1"], None, DEFAULT_J_MIN).unwrap();
        assert!(matches!(
            flip.jacobian_at(&[1.0]),
            Err(Error::SingularJacobian { det, .. }) if det == -1.0
        ));
    }

    #[test]
    fn sinh_divergence_closed_form() {
        let m = sinh_map();
        for x in [-2.0f64, -0.4, 1.0, 3.0] {
            let expected = -x.sinh() / x.cosh().powi(2);
            let direct = m.divergence_direct(&[x], 0).unwrap();
            assert!((direct - expected).abs() < 1e-15, "{x}");
        }
        let at_one = m.divergence_direct(&[1.0], 0).unwrap();
        assert!((at_one - (-1f64.tanh() / 1f64.cosh())).abs() < 1e-15);
        let lemma = m.divergence_via_lemma(&[1.0], 0).unwrap();
        assert!((at_one - lemma).abs() < 1e-15);
    }

    #[test]
    fn affine_maps_have_zero_divergence() {
        let m = DiffeoMap::parse(
            3,
            &["2*x1 + x2 - 1", "x2 + 0.5*x3", "3*x3 - x1 + 4"],
            None,
            DEFAULT_J_MIN,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut first = None;
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let d = m.jacobian_at(&x).unwrap();
            assert_eq!(*first.get_or_insert(d.det_j), d.det_j);
            for a in 0..3 {
                assert_eq!(d.divergence[a], 0.0);
                assert_eq!(m.divergence_via_lemma(&x, a).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn divergence_formulas_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for m in [shear_map(), coupled_map()] {
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                for a in 0..2 {
                    let d = m.divergence_direct(&x, a).unwrap();
                    let l = m.divergence_via_lemma(&x, a).unwrap();
                    assert!((d - l).abs() <= 1e-9 * (1.0 + d.abs()), "{x:?} {a}: {d} vs {l}");
                }
            }
        }
    }

    #[test]
    fn lemma_route_limited_to_four_dimensions() {
        let vars: Vec<String> = (1..=5).map(|i| format!("x{i}")).collect();
        let texts: Vec<&str> = vars.iter().map(String::as_str).collect();
        let m = DiffeoMap::parse(5, &texts, None, DEFAULT_J_MIN).unwrap();
        assert!(matches!(
            m.divergence_via_lemma(&[0.0; 5], 0),
            Err(Error::Dimension(_))
        ));
        assert_eq!(m.divergence_direct(&[0.0; 5], 4).unwrap(), 0.0);
    }

    #[test]
    fn inversion_round_trips() {
        let id = DiffeoMap::identity(2);
        assert_eq!(id.invert_point(&[3.0, -1.0], &[0.0, 0.0]).unwrap(), vec![3.0, -1.0]);
        let s = sinh_map();
        let back = s.invert_point(&[2f64.sinh()], &[0.0]).unwrap();
        assert!((back[0] - 2.0).abs() < 1e-12);
        let newton = s.newton(&[2f64.sinh()], &[0.0]).unwrap();
        assert!((newton[0] - 2.0).abs() < 1e-12);
        let shear = shear_map();
        let target = shear.apply(&[0.3, 0.9]).unwrap();
        let x = shear.invert_point(&target, &[0.0, 0.0]).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-10 && (x[1] - 0.9).abs() < 1e-10);
    }

    #[test]
    fn newton_round_trip_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = coupled_map();
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let target = m.apply(&x).unwrap();
            let back = m.newton(&target, &[0.0, 0.0]).unwrap();
            let symbolic = m.invert_point(&target, &[0.0, 0.0]).unwrap();
            for i in 0..2 {
                assert!((back[i] - x[i]).abs() < 1e-10);
                assert!((symbolic[i] - x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn newton_reports_singular_start() {
        let cube = DiffeoMap::parse(1, &["x1^3 + x1"], None, DEFAULT_J_MIN).unwrap();
        assert!(cube.newton(&[10.0], &[0.0]).is_ok());
        let flat = DiffeoMap::parse(1, &["x1^3"], None, DEFAULT_J_MIN).unwrap();
        assert!(matches!(
            flat.newton(&[1.0], &[0.0]),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn validation_outcomes() {
        let report = sinh_map().validate_global(&[(-5.0, 5.0)], 101);
        assert!(report.passed(), "{:?}", report.violations);
        assert_eq!(report.samples, 101);

        let cube = DiffeoMap::parse(1, &["x1^3"], None, DEFAULT_J_MIN).unwrap();
        let report = cube.validate_global(&[(-1.0, 1.0)], 101);
        assert!(!report.passed());
        assert!(report.singular_points().all(|v| v.point[0].abs() < 0.02));
        assert!(report.singular_points().any(|v| v.point[0] == 0.0));

        let polar = DiffeoMap::parse(
            2,
            &["sqrt(x1^2 + x2^2)", "atan(x2/x1)"],
            Some(&["x1*cos(x2)", "x1*sin(x2)"]),
            DEFAULT_J_MIN,
        )
        .unwrap();
        let report = polar.validate_global(&[(-2.0, 2.0), (-2.0, 2.0)], 21);
        assert!(!report.passed());
        assert!(report.singular_points().any(|v| v.point == vec![0.0, 0.0]));
        // the angle branch cannot be inverted on the left half plane
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v.kind, ViolationKind::InverseMismatch { .. })));
    }
}
