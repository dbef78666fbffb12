//! Grid realizations of `X_α`, `p_β`, the symmetrized momenta `P_α`, the
//! flat momenta `-i∂/∂X_α` on the image lattice, and the unitary change of
//! variables between the two lattices. Also the classical extended point
//! transformation and its Poisson brackets.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::diffeo::{symbolic_cofactor, DiffeoMap, SYMBOLIC_DET_MAX_DIM};
use crate::expr::{self, Expr};
use crate::grid::{diff_operator, Grid, GridFunction};
use crate::linop::LinearOperator;
use crate::{Error, Result};

pub use crate::linop::DENSE_LIMIT;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Distance, in image-lattice cells, that mapped supports must keep from
/// the image boundary (and preimages from the source boundary).
pub const SUPPORT_MARGIN_CELLS: f64 = 2.0;

fn check_dims(m: &DiffeoMap, g: &Grid) -> Result<()> {
    if m.dim() != g.dim() {
        return Err(Error::Dimension(format!(
            "map of dimension {} on a grid of dimension {}",
            m.dim(),
            g.dim()
        )));
    }
    Ok(())
}

fn check_axis(g: &Grid, axis: usize) -> Result<()> {
    if axis >= g.dim() {
        return Err(Error::Dimension(format!(
            "axis {} out of range for dimension {}",
            axis + 1,
            g.dim()
        )));
    }
    Ok(())
}

/// Multiplication by `f_α(x)`.
pub fn position_op(m: &DiffeoMap, g: &Arc<Grid>, alpha: usize) -> Result<LinearOperator> {
    check_dims(m, g)?;
    check_axis(g, alpha)?;
    let f = &m.forward()[alpha];
    let diag = g
        .points()
        .map(|x| f.eval(&x).map(|v| Complex64::new(v, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearOperator::diagonal(Arc::clone(g), &diag))
}

/// `p_β = -i ∂/∂x_β` with the centered stencil.
pub fn momentum_flat(g: &Arc<Grid>, beta: usize) -> LinearOperator {
    let d = diff_operator(g, beta);
    LinearOperator::from_rows(Arc::clone(g), |k, row| {
        row.extend(d.row(k).map(|(c, v)| (c, Complex64::new(0.0, -v.re))));
    })
}

/// `-i ∂/∂X_α` on the image lattice.
pub fn flat_momentum_in_image(g_image: &Arc<Grid>, alpha: usize) -> LinearOperator {
    momentum_flat(g_image, alpha)
}

/// Inverse Jacobian, determinant and divergence sampled on a lattice.
#[derive(Debug, Clone)]
pub struct JacobianField {
    dim: usize,
    /// Per point, row-major `inv_df[(β, α)]`.
    inv: Vec<f64>,
    det: Vec<f64>,
    /// Per point, `b_α` for each α.
    divergence: Vec<f64>,
}

impl JacobianField {
    /// Fails with `SingularJacobian` at the first lattice point where
    /// `J ≤ j_min`.
    pub fn sample(m: &DiffeoMap, g: &Grid) -> Result<JacobianField> {
        check_dims(m, g)?;
        let n = m.dim();
        let mut inv = Vec::with_capacity(g.total() * n * n);
        let mut det = Vec::with_capacity(g.total());
        let mut divergence = Vec::with_capacity(g.total() * n);
        for x in g.points() {
            let d = m.jacobian_at(&x)?;
            for b in 0..n {
                for a in 0..n {
                    inv.push(d.inv_df[(b, a)]);
                }
            }
            det.push(d.det_j);
            divergence.extend_from_slice(&d.divergence);
        }
        Ok(JacobianField {
            dim: n,
            inv,
            det,
            divergence,
        })
    }

    /// `∂x_β/∂X_α` at lattice point `k`.
    pub fn inv_df(&self, k: usize, beta: usize, alpha: usize) -> f64 {
        self.inv[k * self.dim * self.dim + beta * self.dim + alpha]
    }

    pub fn det(&self, k: usize) -> f64 {
        self.det[k]
    }

    pub fn divergence(&self, k: usize, alpha: usize) -> f64 {
        self.divergence[k * self.dim + alpha]
    }
}

/// `P_α = -(i/2) Σ_β (C_β D_β + D_β C_β)` with `C_β = diag(∂x_β/∂X_α)`.
///
/// Entry `(j, k)` is `-(i/2) D_jk (c_j + c_k)`, so the matrix is hermitian
/// exactly, not just up to rounding.
pub fn momentum_op(m: &DiffeoMap, g: &Arc<Grid>, alpha: usize) -> Result<LinearOperator> {
    check_axis(g, alpha)?;
    let field = JacobianField::sample(m, g)?;
    Ok(momentum_from_field(&field, g, alpha))
}

pub fn momentum_from_field(field: &JacobianField, g: &Arc<Grid>, alpha: usize) -> LinearOperator {
    let stencils: Vec<LinearOperator> = (0..g.dim()).map(|b| diff_operator(g, b)).collect();
    LinearOperator::from_rows(Arc::clone(g), |j, row| {
        for (beta, d) in stencils.iter().enumerate() {
            let cj = field.inv_df(j, beta, alpha);
            for (k, djk) in d.row(j) {
                let ck = field.inv_df(k, beta, alpha);
                row.push((k, Complex64::new(0.0, -0.5 * (djk.re * (cj + ck)))));
            }
        }
    })
}

/// Expanded form `-i Σ_β C_β D_β - (i/2) diag(b_α)`; equal to
/// [`momentum_op`] up to `O(h²)` on smooth compactly supported functions.
pub fn momentum_op_expanded(m: &DiffeoMap, g: &Arc<Grid>, alpha: usize) -> Result<LinearOperator> {
    check_axis(g, alpha)?;
    let field = JacobianField::sample(m, g)?;
    Ok(expanded_from_field(&field, g, alpha))
}

pub fn expanded_from_field(field: &JacobianField, g: &Arc<Grid>, alpha: usize) -> LinearOperator {
    let stencils: Vec<LinearOperator> = (0..g.dim()).map(|b| diff_operator(g, b)).collect();
    LinearOperator::from_rows(Arc::clone(g), |j, row| {
        row.push((j, Complex64::new(0.0, -0.5 * field.divergence(j, alpha))));
        for (beta, d) in stencils.iter().enumerate() {
            let cj = field.inv_df(j, beta, alpha);
            row.extend(d.row(j).map(|(k, djk)| (k, Complex64::new(0.0, -cj * djk.re))));
        }
    })
}

/// Symbolic coefficients of `P_α = -i (Σ_β c_β ∂/∂x_β + ½ b_α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumCoefficients {
    pub alpha: usize,
    /// `c_β = ∂x_β/∂X_α`, one per β.
    pub first_order: Vec<Expr>,
    /// `b_α = Σ_β ∂c_β/∂x_β`.
    pub divergence: Expr,
}

impl MomentumCoefficients {
    /// The multiplicative term `½ b_α`.
    pub fn zeroth_order(&self) -> Expr {
        expr::mul(Expr::Const(0.5), self.divergence.clone())
    }
}

/// Derives the coefficients symbolically through the adjugate,
/// `∂x_β/∂X_α = cof(Df)_{αβ} / J`. Limited to dimension 4.
pub fn symbolic_momentum_coefficients(m: &DiffeoMap, alpha: usize) -> Result<MomentumCoefficients> {
    let n = m.dim();
    if alpha >= n {
        return Err(Error::Dimension(format!(
            "component index {} out of range for dimension {n}",
            alpha + 1
        )));
    }
    let det = m.det_expr().ok_or_else(|| {
        Error::Dimension(format!(
            "symbolic inverse Jacobian is implemented for n <= {SYMBOLIC_DET_MAX_DIM}, got n = {n}"
        ))
    })?;
    let jac = m.jacobian_exprs();
    let first_order: Vec<Expr> = (0..n)
        .map(|beta| expr::div(symbolic_cofactor(jac, alpha, beta), det.clone()))
        .collect();
    let divergence = first_order
        .iter()
        .enumerate()
        .fold(Expr::Const(0.0), |acc, (beta, c)| expr::add(acc, c.derive(beta)));
    Ok(MomentumCoefficients {
        alpha,
        first_order,
        divergence,
    })
}

/// Image lattice for the unitary map: the bounding box of `f` over the
/// boundary of `gx`, shrunk by two image cells per side.
pub fn default_image_grid(m: &DiffeoMap, gx: &Grid, counts: Vec<usize>) -> Result<Grid> {
    check_dims(m, gx)?;
    let n = gx.dim();
    if counts.len() != n {
        return Err(Error::config("image_counts", "one count per axis required"));
    }
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for k in 0..gx.total() {
        let idx = gx.multi_index(k);
        let on_face = idx
            .iter()
            .zip(gx.counts())
            .any(|(&i, &c)| i == 0 || i == c - 1);
        if !on_face {
            continue;
        }
        let fx = m.apply(&gx.point(k))?;
        for a in 0..n {
            lo[a] = lo[a].min(fx[a]);
            hi[a] = hi[a].max(fx[a]);
        }
    }
    let bounds = (0..n)
        .map(|a| {
            let h = (hi[a] - lo[a]) / (counts[a] - 1).max(1) as f64;
            (lo[a] + 2.0 * h, hi[a] - 2.0 * h)
        })
        .collect();
    Grid::new(bounds, counts)
}

/// Preimages `x(X)` of every image lattice point. Without a symbolic
/// inverse, Newton is warm-started from the nearest lattice neighbour that
/// has already been inverted.
pub fn preimages(m: &DiffeoMap, g_image: &Grid) -> Result<Vec<Vec<f64>>> {
    check_dims(m, g_image)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(g_image.total());
    let zero = vec![0.0; m.dim()];
    for k in 0..g_image.total() {
        let idx = g_image.multi_index(k);
        let seed = match idx.iter().rposition(|&i| i > 0) {
            Some(axis) => &out[k - g_image.strides()[axis]],
            None => &zero,
        };
        let x = m.invert_point(&g_image.point(k), seed)?;
        out.push(x);
    }
    Ok(out)
}

/// `(Uu)(X) = u(x(X)) / √J(x(X))` sampled on the image lattice.
pub fn unitary_forward(
    m: &DiffeoMap,
    gx: &Arc<Grid>,
    g_image: &Arc<Grid>,
    u: &GridFunction,
) -> Result<GridFunction> {
    let xs = preimages(m, g_image)?;
    unitary_forward_with(m, gx, g_image, u, &xs)
}

/// [`unitary_forward`] with preimages computed once by [`preimages`].
pub fn unitary_forward_with(
    m: &DiffeoMap,
    gx: &Arc<Grid>,
    g_image: &Arc<Grid>,
    u: &GridFunction,
    preimages: &[Vec<f64>],
) -> Result<GridFunction> {
    check_dims(m, gx)?;
    check_dims(m, g_image)?;
    if **u.grid() != **gx {
        return Err(Error::GridMismatch);
    }
    for k in u.support() {
        let x = gx.point(k);
        let fx = m.apply(&x)?;
        if !g_image.contains_with_margin(&fx, SUPPORT_MARGIN_CELLS) {
            return Err(Error::Support(format!(
                "f({x:?}) = {fx:?} lies within two cells of the image lattice boundary"
            )));
        }
    }
    let mut values = Vec::with_capacity(g_image.total());
    for x in preimages {
        let v = gx.interpolate(u.values(), x).unwrap_or(ZERO);
        values.push(if v == ZERO {
            ZERO
        } else {
            v / m.det_at(x)?.sqrt()
        });
    }
    GridFunction::new(Arc::clone(g_image), values)
}

/// `(U*t)(x) = √J(x) · t(f(x))` sampled on the source lattice.
pub fn unitary_inverse(
    m: &DiffeoMap,
    gx: &Arc<Grid>,
    g_image: &Arc<Grid>,
    t: &GridFunction,
) -> Result<GridFunction> {
    check_dims(m, gx)?;
    check_dims(m, g_image)?;
    if **t.grid() != **g_image {
        return Err(Error::GridMismatch);
    }
    let mut seed = vec![0.0; m.dim()];
    for k in t.support() {
        let target = g_image.point(k);
        let x = m.invert_point(&target, &seed)?;
        if !gx.contains_with_margin(&x, SUPPORT_MARGIN_CELLS) {
            return Err(Error::Support(format!(
                "preimage {x:?} of {target:?} lies within two cells of the source lattice boundary"
            )));
        }
        seed = x;
    }
    let mut values = Vec::with_capacity(gx.total());
    for x in gx.points() {
        let fx = m.apply(&x)?;
        let v = g_image.interpolate(t.values(), &fx).unwrap_or(ZERO);
        values.push(if v == ZERO {
            ZERO
        } else {
            v * m.det_at(&x)?.sqrt()
        });
    }
    GridFunction::new(Arc::clone(gx), values)
}

/// Classical phase-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

/// `(x, p) ↦ (f(x), P)` with `P_α = Σ_β (∂x_β/∂X_α) p_β`.
pub fn classical_extended(m: &DiffeoMap, s: &ClassicalState) -> Result<ClassicalState> {
    if s.p.len() != m.dim() {
        return Err(Error::Dimension("momentum length differs from dimension".into()));
    }
    let d = m.jacobian_at(&s.x)?;
    let x = m.apply(&s.x)?;
    let p = (0..m.dim())
        .map(|a| (0..m.dim()).map(|b| d.inv_df[(b, a)] * s.p[b]).sum())
        .collect();
    Ok(ClassicalState { x, p })
}

/// `|[X_α,P_β] - δ_αβ|`, `|[X_α,X_β]|`, `|[P_α,P_β]|` at one phase-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonResiduals {
    pub xp: f64,
    pub xx: f64,
    pub pp: f64,
}

impl PoissonResiduals {
    pub fn max(&self) -> f64 {
        self.xp.max(self.xx).max(self.pp)
    }
}

/// Poisson brackets of the new variables, treating `X_α(x)` and
/// `P_β(x, p) = Σ_γ (∂x_γ/∂X_β) p_γ` as phase-space functions. The
/// x-derivatives of the inverse Jacobian use `∂(A⁻¹) = -A⁻¹ (∂A) A⁻¹` with
/// exact second derivatives; p-derivatives are exact since `P` is linear.
pub fn poisson_residuals(
    m: &DiffeoMap,
    x: &[f64],
    p: &[f64],
    alpha: usize,
    beta: usize,
) -> Result<PoissonResiduals> {
    let n = m.dim();
    if alpha >= n || beta >= n || p.len() != n {
        return Err(Error::Dimension("bracket indices or momentum out of range".into()));
    }
    let d = m.jacobian_at(x)?;
    let inv = &d.inv_df;
    let derivs = m.jacobian_derivatives_at(x)?;
    // ∂/∂x_γ of the inverse Jacobian
    let d_inv: Vec<DMatrix<f64>> = derivs.iter().map(|da| -(inv * da * inv)).collect();

    let dx_dx = |a: usize, g: usize| d.df[(a, g)];
    let dp_dp = |a: usize, g: usize| inv[(g, a)];
    let dp_dx = |a: usize, g: usize| (0..n).map(|dl| d_inv[g][(dl, a)] * p[dl]).sum::<f64>();

    let mut xp = 0.0;
    let mut xx = 0.0;
    let mut pp = 0.0;
    for g in 0..n {
        // X has no p-dependence, so the second half of each bracket vanishes.
        xp += dx_dx(alpha, g) * dp_dp(beta, g);
        xx += dx_dx(alpha, g) * 0.0 - 0.0 * dx_dx(beta, g);
        pp += dp_dx(alpha, g) * dp_dp(beta, g) - dp_dp(alpha, g) * dp_dx(beta, g);
    }
    let delta = if alpha == beta { 1.0 } else { 0.0 };
    Ok(PoissonResiduals {
        xp: (xp - delta).abs(),
        xx: xx.abs(),
        pp: pp.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::DEFAULT_J_MIN;
    use crate::grid::{bump, inner, BumpSpec};
    use crate::linop::dense_hermiticity_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sinh_map() -> DiffeoMap {
        DiffeoMap::parse(1, &["sinh(x1)"], Some(&["asinh(x1)"]), DEFAULT_J_MIN).unwrap()
    }

    fn shear_map() -> DiffeoMap {
        DiffeoMap::parse(2, &["sinh(x1)", "x2 + x1"], None, DEFAULT_J_MIN).unwrap()
    }

    fn line(lo: f64, hi: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::cube(1, lo, hi, n).unwrap())
    }

    fn rel_err(a: &GridFunction, b: &GridFunction) -> f64 {
        a.sub(b).unwrap().norm() / b.norm()
    }

    #[test]
    fn position_is_multiplication() {
        let g = line(-3.0, 3.0, 61);
        let id = position_op(&DiffeoMap::identity(1), &g, 0).unwrap();
        let s = position_op(&sinh_map(), &g, 0).unwrap();
        for k in 0..g.total() {
            let x = g.point(k)[0];
            assert_eq!(id.entry(k, k), Complex64::new(x, 0.0));
            assert_eq!(s.entry(k, k), Complex64::new(x.sinh(), 0.0));
        }
        assert_eq!(dense_hermiticity_defect(&s.to_dense().unwrap()), 0.0);
    }

    #[test]
    fn flat_momentum_hermitian_with_real_spectrum() {
        let g = line(-10.0, 10.0, 201);
        let p = momentum_flat(&g, 0);
        let dense = p.to_dense().unwrap();
        assert_eq!(dense, dense.adjoint());
        // oracle: a general (non-hermitian) eigensolver must find no
        // imaginary parts
        let re = dense.map(|z| z.re);
        let im = dense.map(|z| z.im);
        let n = g.total();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&re);
        block.view_mut((n, n), (n, n)).copy_from(&re);
        block.view_mut((0, n), (n, n)).copy_from(&(-&im));
        block.view_mut((n, 0), (n, n)).copy_from(&im);
        let eig = block.complex_eigenvalues();
        assert!(eig.iter().all(|z| z.im.abs() < 1e-8), "complex eigenvalue found");
    }

    #[test]
    fn flat_momentum_applies_minus_i_derivative() {
        let g = line(-6.0, 6.0, 241);
        let u = bump(&g, &BumpSpec::round(vec![0.0], 3.0)).unwrap();
        let pu = momentum_flat(&g, 0).apply(&u).unwrap();
        let du = diff_operator(&g, 0).apply(&u).unwrap();
        for (a, b) in pu.values().iter().zip(du.values()) {
            assert_eq!(*a, Complex64::new(0.0, -b.re));
        }
    }

    #[test]
    fn identity_momentum_equals_flat() {
        let g = Arc::new(Grid::cube(2, -2.0, 2.0, 9).unwrap());
        let id = DiffeoMap::identity(2);
        for a in 0..2 {
            assert_eq!(momentum_op(&id, &g, a).unwrap().to_dense().unwrap(), momentum_flat(&g, a).to_dense().unwrap());
        }
    }

    #[test]
    fn symmetrized_momentum_exactly_hermitian() {
        let g = Arc::new(Grid::cube(2, -3.0, 3.0, 21).unwrap());
        let m = shear_map();
        for a in 0..2 {
            let p = momentum_op(&m, &g, a).unwrap();
            assert_eq!(p.hermiticity_defect(), 0.0);
            assert_eq!(dense_hermiticity_defect(&p.to_dense().unwrap()), 0.0);
        }
    }

    #[test]
    fn sinh_momentum_matches_closed_form() {
        // P u ≈ -i (1/cosh x)(u' - ½ tanh(x) u), error O(h²)
        let m = sinh_map();
        let errs: Vec<f64> = [201, 401, 801]
            .iter()
            .map(|&n| {
                let g = line(-10.0, 10.0, n);
                let spec = BumpSpec::round(vec![0.5], 3.0);
                let u = bump(&g, &spec).unwrap();
                let pu = momentum_op(&m, &g, 0).unwrap().apply(&u).unwrap();
                let exact = GridFunction::from_fn(Arc::clone(&g), |x| {
                    let x = x[0];
                    let t = (x - 0.5) / 3.0;
                    let psi = spec.value_at(&[x]);
                    let dpsi = if t.abs() < 1.0 {
                        psi * (-2.0 * t / (1.0 - t * t).powi(2)) / 3.0
                    } else {
                        0.0
                    };
                    Complex64::new(0.0, -(dpsi - 0.5 * x.tanh() * psi) / x.cosh())
                })
                .unwrap();
                rel_err(&pu, &exact)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn symmetrized_and_expanded_forms_converge() {
        let m = sinh_map();
        let errs: Vec<f64> = [201, 401, 801]
            .iter()
            .map(|&n| {
                let g = line(-8.0, 8.0, n);
                let u = bump(&g, &BumpSpec::round(vec![0.0], 3.0)).unwrap();
                let p = momentum_op(&m, &g, 0).unwrap().apply(&u).unwrap();
                let q = momentum_op_expanded(&m, &g, 0).unwrap().apply(&u).unwrap();
                p.sub(&q).unwrap().norm() / u.norm()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn symbolic_coefficients_for_sinh() {
        let c = symbolic_momentum_coefficients(&sinh_map(), 0).unwrap();
        for x in [-3.0f64, 0.0, 0.4, 2.5] {
            let first = c.first_order[0].eval(&[x]).unwrap();
            let zeroth = c.zeroth_order().eval(&[x]).unwrap();
            assert!((first - 1.0 / x.cosh()).abs() < 1e-15);
            assert!((zeroth + 0.5 * x.tanh() / x.cosh()).abs() < 1e-15);
        }
    }

    #[test]
    fn symbolic_coefficients_match_numeric_field() {
        let m = shear_map();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for a in 0..2 {
            let c = symbolic_momentum_coefficients(&m, a).unwrap();
            for _ in 0..10 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let d = m.jacobian_at(&x).unwrap();
                for b in 0..2 {
                    assert!((c.first_order[b].eval(&x).unwrap() - d.inv_df[(b, a)]).abs() < 1e-14);
                }
                assert!((c.divergence.eval(&x).unwrap() - d.divergence[a]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn unitary_identity_exact() {
        let g = line(-5.0, 5.0, 101);
        let id = DiffeoMap::identity(1);
        let u = bump(&g, &BumpSpec::round(vec![0.3], 2.0)).unwrap();
        let t = unitary_forward(&id, &g, &g, &u).unwrap();
        assert_eq!(t.values(), u.values());
        assert_eq!(unitary_inverse(&id, &g, &g, &t).unwrap().values(), u.values());
    }

    #[test]
    fn unitary_scaling_closed_form() {
        let m = DiffeoMap::parse(1, &["2*x1"], Some(&["0.5*x1"]), DEFAULT_J_MIN).unwrap();
        let gx = line(-6.0, 6.0, 241);
        let gx_image = line(-12.0, 12.0, 241);
        let spec = BumpSpec::round(vec![0.5], 3.0);
        let u = bump(&gx, &spec).unwrap();
        let t = unitary_forward(&m, &gx, &gx_image, &u).unwrap();
        for (k, v) in t.values().iter().enumerate() {
            let big_x = gx_image.point(k)[0];
            let expected = spec.value_at(&[big_x / 2.0]) / 2f64.sqrt();
            assert!((v.re - expected).abs() < 1e-15, "{big_x}");
        }
        let back = unitary_inverse(&m, &gx, &gx_image, &t).unwrap();
        assert!(rel_err(&back, &u) < 1e-14);
        let n2 = inner(&t, &t).unwrap().re;
        let m2 = inner(&u, &u).unwrap().re;
        assert!((n2 - m2).abs() / m2 < 1e-13);
    }

    #[test]
    fn unitary_sinh_isometry_and_round_trip() {
        // oracle values from an independent numpy evaluation of the same
        // sampling and linear interpolation
        let m = sinh_map();
        let s6 = 6f64.sinh();
        let mut prev: Option<(f64, f64)> = None;
        for (n, n_image, iso_ref, rt_ref) in [
            (481, 2001, 3.481499261e-5, 1.320493571e-3),
            (961, 4001, 8.573645712e-6, 3.316400527e-4),
        ] {
            let gx = line(-6.0, 6.0, n);
            let gi = line(-s6 + 1.0, s6 - 1.0, n_image);
            let u = bump(&gx, &BumpSpec::round(vec![0.0], 3.0)).unwrap();
            let t = unitary_forward(&m, &gx, &gi, &u).unwrap();
            let iso = (t.norm().powi(2) - u.norm().powi(2)).abs() / u.norm().powi(2);
            let rt = rel_err(&unitary_inverse(&m, &gx, &gi, &t).unwrap(), &u);
            assert!(iso <= 1e-4);
            assert!((iso - iso_ref).abs() < 1e-6 * iso_ref, "{iso}");
            assert!((rt - rt_ref).abs() < 1e-6 * rt_ref, "{rt}");
            if let Some((pi, pr)) = prev {
                assert!((pi / iso).log2() >= 1.0 && (pr / rt).log2() >= 1.0);
                assert!(rt <= 1e-3);
            }
            prev = Some((iso, rt));
        }
    }

    #[test]
    fn unitary_support_guard() {
        let m = sinh_map();
        let gx = line(-6.0, 6.0, 481);
        let gi = line(-9.0, 9.0, 181);
        let u = bump(&gx, &BumpSpec::round(vec![0.0], 3.0)).unwrap();
        assert!(matches!(
            unitary_forward(&m, &gx, &gi, &u),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn newton_preimages_match_symbolic_inverse() {
        let with_inverse = DiffeoMap::parse(
            2,
            &["sinh(x1)", "x2 + x1"],
            Some(&["asinh(x1)", "x2 - asinh(x1)"]),
            DEFAULT_J_MIN,
        )
        .unwrap();
        let gi = Grid::cube(2, -3.0, 3.0, 13).unwrap();
        let a = preimages(&shear_map(), &gi).unwrap();
        let b = preimages(&with_inverse, &gi).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p[0] - q[0]).abs() < 1e-10 && (p[1] - q[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn default_image_grid_sinh() {
        let gx = Grid::cube(1, -6.0, 6.0, 481).unwrap();
        let gi = default_image_grid(&sinh_map(), &gx, vec![2001]).unwrap();
        let s6 = 6f64.sinh();
        let h = 2.0 * s6 / 2000.0;
        assert!((gi.bounds()[0].1 - (s6 - 2.0 * h)).abs() < 1e-12);
    }

    #[test]
    fn classical_transform_examples() {
        let id = DiffeoMap::identity(2);
        let s = ClassicalState {
            x: vec![0.3, -1.0],
            p: vec![2.0, 0.5],
        };
        assert_eq!(classical_extended(&id, &s).unwrap(), s);

        let double = DiffeoMap::parse(1, &["2*x1"], None, DEFAULT_J_MIN).unwrap();
        let out = classical_extended(&double, &ClassicalState { x: vec![1.0], p: vec![3.0] }).unwrap();
        assert_eq!(out.x, vec![2.0]);
        assert_eq!(out.p, vec![1.5]);

        let out = classical_extended(&sinh_map(), &ClassicalState { x: vec![1.0], p: vec![3.0] }).unwrap();
        assert_eq!(out.x[0], 1f64.sinh());
        // independent route: ∂x/∂X = 1/f'(x)
        assert!((out.p[0] - 3.0 / 1f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn classical_round_trip_through_inverse_map() {
        let m = shear_map();
        let back_map =
            DiffeoMap::parse(2, &["asinh(x1)", "x2 - asinh(x1)"], None, DEFAULT_J_MIN).unwrap();
        let s = ClassicalState {
            x: vec![0.4, -1.1],
            p: vec![0.7, -0.2],
        };
        let there = classical_extended(&m, &s).unwrap();
        let back = classical_extended(&back_map, &there).unwrap();
        for i in 0..2 {
            assert!((back.x[i] - s.x[i]).abs() < 1e-10);
            assert!((back.p[i] - s.p[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_brackets_vanish() {
        let id = DiffeoMap::identity(2);
        let r = poisson_residuals(&id, &[0.1, 0.2], &[1.0, -1.0], 0, 1).unwrap();
        assert_eq!(r, PoissonResiduals { xp: 0.0, xx: 0.0, pp: 0.0 });
        let m = shear_map();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for a in 0..2 {
                for b in 0..2 {
                    let r = poisson_residuals(&m, &x, &p, a, b).unwrap();
                    assert_eq!(r.xx, 0.0);
                    assert!(r.max() <= 1e-10, "{r:?}");
                }
            }
        }
    }
}
