//! Truncated rectangular lattices, complex grid functions, bump test
//! functions, rectangle-rule inner products and centered difference stencils.

use std::sync::Arc;

use num_complex::Complex64;

use crate::linop::LinearOperator;
use crate::{Error, Result};

/// Row-major lattice over a box; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
}

impl Grid {
    pub fn new(bounds: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Grid> {
        if bounds.is_empty() {
            return Err(Error::config("grid", "dimension must be positive"));
        }
        if bounds.len() != counts.len() {
            return Err(Error::config(
                "grid",
                format!("{} bounds but {} counts", bounds.len(), counts.len()),
            ));
        }
        for (axis, (&(a, b), &n)) in bounds.iter().zip(&counts).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::config(
                    format!("grid.bounds[{axis}]"),
                    format!("need finite a < b, got [{a}, {b}]"),
                ));
            }
            if n < 3 {
                return Err(Error::config(
                    format!("grid.counts[{axis}]"),
                    format!("need at least 3 points, got {n}"),
                ));
            }
        }
        let spacing = bounds
            .iter()
            .zip(&counts)
            .map(|(&(a, b), &n)| (b - a) / (n - 1) as f64)
            .collect();
        let mut strides = vec![1; counts.len()];
        for axis in (0..counts.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        let total = counts.iter().product();
        Ok(Grid {
            bounds,
            counts,
            spacing,
            strides,
            total,
        })
    }

    /// Uniform bounds and count on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Grid> {
        Grid::new(vec![(lo, hi); dim], vec![count; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Rectangle-rule weight Π h_i.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.bounds[axis].0 + i as f64 * self.spacing[axis]
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (axis, &s) in self.strides.iter().enumerate() {
            idx[axis] = k / s;
            k %= s;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.total).map(|k| self.point(k))
    }

    /// Whether `x` lies at least `cells` spacings inside every face.
    pub fn contains_with_margin(&self, x: &[f64], cells: f64) -> bool {
        x.iter()
            .zip(&self.bounds)
            .zip(&self.spacing)
            .all(|((&v, &(a, b)), &h)| v >= a + cells * h && v <= b - cells * h)
    }

    /// Multilinear interpolation of `values` at `x`; `None` outside the box.
    /// Positions within `1e-10` cells of a lattice point take its value.
    pub fn interpolate(&self, values: &[Complex64], x: &[f64]) -> Option<Complex64> {
        let n = self.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for axis in 0..n {
            let (a, b) = self.bounds[axis];
            if !(x[axis] >= a && x[axis] <= b) {
                return None;
            }
            let mut s = (x[axis] - a) / self.spacing[axis];
            if (s - s.round()).abs() <= 1e-10 {
                s = s.round();
            }
            let i = (s.floor() as usize).min(self.counts[axis] - 2);
            base[axis] = i;
            frac[axis] = s - i as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut k = 0;
            for axis in 0..n {
                let up = (corner >> axis) & 1 == 1;
                w *= if up { frac[axis] } else { 1.0 - frac[axis] };
                k += (base[axis] + usize::from(up)) * self.strides[axis];
            }
            if w != 0.0 {
                acc += values[k] * w;
            }
        }
        Some(acc)
    }
}

/// Complex samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<GridFunction> {
        if values.len() != grid.total() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.total()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Dimension(format!("non-finite value at lattice index {k}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> GridFunction {
        let values = vec![Complex64::new(0.0, 0.0); grid.total()];
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> Complex64) -> Result<GridFunction> {
        let values = grid.points().map(|p| f(&p)).collect();
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn norm(&self) -> f64 {
        inner(self, self).map_or(0.0, |z| z.re.max(0.0).sqrt())
    }

    /// Lattice indices where the value is not exactly zero.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(k, _)| k)
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product with real samples.
    pub fn mul_real(&self, weights: &[f64]) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(weights).map(|(&v, &w)| v * w).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<GridFunction> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// L² inner product Σ u conj(v) Π h_i.
pub fn inner(u: &GridFunction, v: &GridFunction) -> Result<Complex64> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let sum: Complex64 = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| a * b.conj())
        .sum();
    Ok(sum * u.grid.cell_volume())
}

/// Axis-aligned smooth bump: product of `exp(-1/(1-t²))` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl BumpSpec {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> BumpSpec {
        BumpSpec { center, radius }
    }

    /// Same radius on every axis.
    pub fn round(center: Vec<f64>, radius: f64) -> BumpSpec {
        let radius = vec![radius; center.len()];
        BumpSpec { center, radius }
    }

    /// Support must sit at least two cells inside every face.
    pub fn validate(&self, g: &Grid) -> Result<()> {
        if self.center.len() != g.dim() || self.radius.len() != g.dim() {
            return Err(Error::config(
                "bump",
                format!("bump dimension does not match grid dimension {}", g.dim()),
            ));
        }
        for axis in 0..g.dim() {
            let (a, b) = g.bounds()[axis];
            let h = g.spacing()[axis];
            let (c, r) = (self.center[axis], self.radius[axis]);
            if !(r > 0.0 && r.is_finite() && c.is_finite()) {
                return Err(Error::config(
                    format!("bump.radius[{axis}]"),
                    "radius must be positive and finite",
                ));
            }
            if c - r < a + 2.0 * h || c + r > b - 2.0 * h {
                return Err(Error::config(
                    format!("bump[{axis}]"),
                    format!(
                        "support [{}, {}] violates the two-cell margin of [{a}, {b}] (h = {h})",
                        c - r,
                        c + r
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .zip(&self.radius)
            .map(|((&x, &c), &r)| bump_profile((x - c) / r))
            .product()
    }
}

/// ψ(t) = exp(-1/(1-t²)) on |t| < 1, zero elsewhere.
pub fn bump_profile(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Samples a bump on the grid.
pub fn bump(g: &Arc<Grid>, spec: &BumpSpec) -> Result<GridFunction> {
    spec.validate(g)?;
    GridFunction::from_fn(Arc::clone(g), |x| Complex64::new(spec.value_at(x), 0.0))
}

/// Centered difference `(u[k+1] - u[k-1]) / 2h` along `axis`.
///
/// Rows and columns of the two boundary layers are zero, which keeps the
/// matrix exactly antisymmetric. Rows one cell from the boundary treat the
/// boundary value as zero; admitted test functions vanish there anyway.
pub fn diff_operator(g: &Arc<Grid>, axis: usize) -> LinearOperator {
    let weight = 1.0 / (2.0 * g.spacing()[axis]);
    let stride = g.strides()[axis];
    let n = g.counts()[axis];
    LinearOperator::from_rows(Arc::clone(g), |k, row| {
        let i = (k / stride) % n;
        if i == 0 || i == n - 1 {
            return;
        }
        if i >= 2 {
            row.push((k - stride, Complex64::new(-weight, 0.0)));
        }
        if i + 2 < n {
            row.push((k + stride, Complex64::new(weight, 0.0)));
        }
    })
}
