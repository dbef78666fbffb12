//! Quantified checks of the operator properties, and the suite runner.
//!
//! Each check returns a [`CheckResult`] holding named residuals, each with
//! its own acceptance limit. Discretization-limited quantities are judged
//! by observed convergence order across refinement levels; structurally
//! exact ones by machine-level bounds.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{CheckSpec, CubeLevel, SuiteConfig};
use crate::diffeo::{DiffeoMap, ViolationKind};
use crate::expr::{self, Expr};
use crate::grid::{bump, inner, BumpSpec, Grid, GridFunction};
use crate::linop::{dense_hermiticity_defect, LinearOperator, DENSE_LIMIT};
use crate::operators::{
    flat_momentum_in_image, momentum_from_field, poisson_residuals, position_op, preimages,
    symbolic_momentum_coefficients, unitary_forward_with, unitary_inverse, JacobianField,
};
use crate::{Error, Result};

/// Bound for quantities that are exact up to rounding.
pub const EXACT_TOL: f64 = 1e-12;

/// Upper limit on lattice points for kernel-growth quadrature.
pub const KERNEL_MAX_POINTS: usize = 2_000_000;

/// Acceptance rule for one residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    AtMost(f64),
    AtLeast(f64),
    /// Strictly below.
    Below(f64),
    /// Strictly above.
    Above(f64),
    /// Reported, not judged.
    Info,
}

impl Limit {
    pub fn holds(self, v: f64) -> bool {
        match self {
            Limit::AtMost(t) => v <= t,
            Limit::AtLeast(t) => v >= t,
            Limit::Below(t) => v < t,
            Limit::Above(t) => v > t,
            Limit::Info => true,
        }
    }

    pub fn describe(self) -> String {
        match self {
            Limit::AtMost(t) => format!("<= {t:e}"),
            Limit::AtLeast(t) => format!(">= {t}"),
            Limit::Below(t) => format!("< {t}"),
            Limit::Above(t) => format!("> {t:e}"),
            Limit::Info => "info".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub limit: Limit,
}

impl Residual {
    pub fn pass(&self) -> bool {
        self.limit.holds(self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Witness checks are finite-grid proxies for statements that no
    /// discretization can establish.
    pub witness: bool,
    pub residuals: Vec<Residual>,
    /// Headline tolerance; each residual carries its own limit.
    pub tolerance: f64,
    pub pass: bool,
    pub context: Vec<(String, String)>,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

impl CheckResult {
    pub fn new(name: &str, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            witness: false,
            residuals: Vec::new(),
            tolerance,
            pass: false,
            context: Vec::new(),
            runtime_ms: 0,
            error: None,
        }
    }

    /// A check that could not run.
    pub fn failed(name: &str, tolerance: f64, error: String) -> CheckResult {
        let mut r = CheckResult::new(name, tolerance);
        r.error = Some(error);
        r
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, limit: Limit) {
        self.residuals.push(Residual {
            name: name.into(),
            value,
            limit,
        });
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.context.push((key.into(), value.into()));
    }

    /// Sets `pass`: no error, at least one residual, all residuals in limits.
    pub fn finish(mut self) -> CheckResult {
        self.pass = self.error.is_none()
            && !self.residuals.is_empty()
            && self.residuals.iter().all(Residual::pass);
        self
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.value)
    }

    /// Residuals outside their limits.
    pub fn failures(&self) -> impl Iterator<Item = &Residual> {
        self.residuals.iter().filter(|r| !r.pass())
    }

    pub fn to_json(&self) -> Value {
        let mut residuals = Map::new();
        let mut limits = Map::new();
        for r in &self.residuals {
            residuals.insert(r.name.clone(), json!(r.value));
            limits.insert(r.name.clone(), json!(r.limit.describe()));
        }
        let mut context = Map::new();
        for (k, v) in &self.context {
            context.insert(k.clone(), json!(v));
        }
        let mut obj = Map::new();
        obj.insert("name".into(), json!(self.name));
        obj.insert("kind".into(), json!(if self.witness { "witness" } else { "check" }));
        obj.insert("residuals".into(), Value::Object(residuals));
        obj.insert("limits".into(), Value::Object(limits));
        obj.insert("tolerance".into(), json!(self.tolerance));
        obj.insert("pass".into(), json!(self.pass));
        obj.insert("runtime_ms".into(), json!(self.runtime_ms));
        obj.insert("context".into(), Value::Object(context));
        if let Some(e) = &self.error {
            obj.insert("error".into(), json!(e));
        }
        Value::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub checks: Vec<CheckResult>,
    pub overall_pass: bool,
    pub started_at: String,
    pub finished_at: String,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "config": self.config,
            "checks": self.checks.iter().map(CheckResult::to_json).collect::<Vec<_>>(),
            "overall_pass": self.overall_pass,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per residual: `check,residual,value,limit,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,residual,value,limit,pass\n");
        for c in &self.checks {
            if c.residuals.is_empty() {
                out.push_str(&format!("{},,,,{}\n", csv_field(&c.name), c.pass));
            }
            for r in &c.residuals {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(&c.name),
                    csv_field(&r.name),
                    r.value,
                    csv_field(&r.limit.describe()),
                    r.pass()
                ));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sample_box(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect()
}

fn rel_norm(a: &GridFunction, b: &GridFunction, scale: f64) -> Result<f64> {
    Ok(a.sub(b)?.norm() / scale)
}

/// Records per-level values and either observed orders
/// `ln(r_k/r_{k+1}) / ln(h_k/h_{k+1})`, or a single machine-level bound
/// when every level is already exact.
pub fn record_convergence(
    r: &mut CheckResult,
    label: &str,
    values: &[f64],
    spacings: &[f64],
    min_order: f64,
) {
    for (k, v) in values.iter().enumerate() {
        r.push(format!("{label}.level{k}"), *v, Limit::Info);
    }
    if values.iter().all(|v| *v <= EXACT_TOL) {
        let max = values.iter().copied().fold(0.0, f64::max);
        r.push(format!("{label}.max"), max, Limit::AtMost(EXACT_TOL));
        return;
    }
    for k in 0..values.len().saturating_sub(1) {
        r.push(
            format!("{label}.order{k}{}", k + 1),
            observed_order(values[k], values[k + 1], spacings[k], spacings[k + 1]),
            Limit::AtLeast(min_order),
        );
    }
}

pub fn observed_order(r_coarse: f64, r_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (r_coarse / r_fine).ln() / (h_coarse / h_fine).ln()
}

/// Forward-difference momentum `-i(u_{k+1} - u_k)/h`; not hermitian. Used
/// as the negative control of the hermiticity check.
pub fn one_sided_momentum(g: &Arc<Grid>, axis: usize) -> LinearOperator {
    let h = g.spacing()[axis];
    let stride = g.strides()[axis];
    let n = g.counts()[axis];
    LinearOperator::from_rows(Arc::clone(g), |k, row| {
        let i = g.multi_index(k)[axis];
        if i + 1 < n {
            row.push((k + stride, Complex64::new(0.0, -1.0 / h)));
            row.push((k, Complex64::new(0.0, 1.0 / h)));
        }
    })
}

/// `max |⟨Au,v⟩ - ⟨u,Av⟩| / (‖u‖‖v‖)` over ordered bump pairs.
pub fn bump_symmetry_residual(op: &LinearOperator, bumps: &[GridFunction]) -> Result<f64> {
    let applied: Vec<GridFunction> = bumps.iter().map(|u| op.apply(u)).collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (u, au) in bumps.iter().zip(&applied) {
        for (v, av) in bumps.iter().zip(&applied) {
            let d = (inner(au, v)? - inner(u, av)?).norm() / (u.norm() * v.norm());
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Hermiticity of one operator on bump test functions, plus the
/// elementwise defect of its dense matrix when that can be formed.
pub fn check_hermiticity(
    op: &LinearOperator,
    bumps: &[BumpSpec],
    tolerance: f64,
    dense_tolerance: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("hermiticity", tolerance);
    r.witness = true;
    let us = bumps.iter().map(|b| bump(op.grid(), b)).collect::<Result<Vec<_>>>()?;
    r.push("bump_symmetry", bump_symmetry_residual(op, &us)?, Limit::AtMost(tolerance));
    if op.grid().total() <= DENSE_LIMIT {
        r.push(
            "dense_defect",
            dense_hermiticity_defect(&op.to_dense()?),
            Limit::AtMost(dense_tolerance),
        );
    }
    Ok(r.finish())
}

/// Lattice with the bounds of `g` and at most [`DENSE_LIMIT`] points.
fn dense_sized(g: &Grid) -> Result<Grid> {
    if g.total() <= DENSE_LIMIT {
        return Ok(g.clone());
    }
    let per_axis = (DENSE_LIMIT as f64).powf(1.0 / g.dim() as f64).floor() as usize;
    Grid::new(g.bounds().to_vec(), vec![per_axis.max(2); g.dim()])
}

fn hermiticity_suite(
    m: &DiffeoMap,
    grids: &[Arc<Grid>],
    bumps: &[BumpSpec],
    tolerance: f64,
    dense_tolerance: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("hermiticity", tolerance);
    r.witness = true;
    for (k, g) in grids.iter().enumerate() {
        let field = JacobianField::sample(m, g)?;
        let us = bumps.iter().map(|b| bump(g, b)).collect::<Result<Vec<_>>>()?;
        for a in 0..m.dim() {
            let p = momentum_from_field(&field, g, a);
            r.push(
                format!("P{}.level{k}.bump_symmetry", a + 1),
                bump_symmetry_residual(&p, &us)?,
                Limit::AtMost(tolerance),
            );
            r.push(
                format!("P{}.level{k}.entry_defect", a + 1),
                p.hermiticity_defect(),
                Limit::AtMost(dense_tolerance),
            );
        }
    }
    let g = Arc::new(dense_sized(&grids[0])?);
    r.note("dense_grid", format!("{:?}", g.counts()));
    for a in 0..m.dim() {
        let p = crate::operators::momentum_op(m, &g, a)?;
        r.push(
            format!("P{}.dense_defect", a + 1),
            dense_hermiticity_defect(&p.to_dense()?),
            Limit::AtMost(dense_tolerance),
        );
    }
    // Negative control: the check must reject a non-hermitian stencil.
    let g0 = &grids[0];
    let us = bumps.iter().map(|b| bump(g0, b)).collect::<Result<Vec<_>>>()?;
    r.push(
        "negative_control.bump_symmetry",
        bump_symmetry_residual(&one_sided_momentum(g0, 0), &us)?,
        Limit::Above(1e-3),
    );
    Ok(r.finish())
}

/// Commutator residuals `r1`, `r2`, `r3` on one lattice, maximized over
/// bumps and index pairs.
pub fn ccr_residuals(m: &DiffeoMap, g: &Arc<Grid>, bumps: &[BumpSpec]) -> Result<[f64; 3]> {
    let n = m.dim();
    let field = JacobianField::sample(m, g)?;
    let xs = (0..n).map(|a| position_op(m, g, a)).collect::<Result<Vec<_>>>()?;
    let ps: Vec<LinearOperator> = (0..n).map(|a| momentum_from_field(&field, g, a)).collect();
    let mut out = [0.0f64; 3];
    for spec in bumps {
        let u = bump(g, spec)?;
        let nu = u.norm();
        let xu = xs.iter().map(|x| x.apply(&u)).collect::<Result<Vec<_>>>()?;
        let pu = ps.iter().map(|p| p.apply(&u)).collect::<Result<Vec<_>>>()?;
        for a in 0..n {
            for b in 0..n {
                let xp = xs[a].apply(&pu[b])?;
                let px = ps[b].apply(&xu[a])?;
                let mut c = xp.sub(&px)?;
                if a == b {
                    c = c.sub(&u.scale(Complex64::new(0.0, 1.0)))?;
                }
                out[0] = out[0].max(c.norm() / nu);
                // formed as an operator so commuting diagonals cancel exactly
                let xx = xs[a].compose(&xs[b])?.sub(&xs[b].compose(&xs[a])?)?;
                out[1] = out[1].max(xx.apply(&u)?.norm() / nu);
                let pp = ps[a].apply(&pu[b])?.sub(&ps[b].apply(&pu[a])?)?;
                out[2] = out[2].max(pp.norm() / nu);
            }
        }
    }
    Ok(out)
}

/// Canonical commutation relations across refinement levels.
pub fn check_ccr(
    m: &DiffeoMap,
    grids: &[Arc<Grid>],
    bumps: &[BumpSpec],
    min_order: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("ccr", min_order);
    let mut levels = Vec::new();
    for g in grids {
        levels.push(ccr_residuals(m, g, bumps)?);
    }
    let h: Vec<f64> = grids.iter().map(|g| g.max_spacing()).collect();
    let col = |i: usize| levels.iter().map(|l| l[i]).collect::<Vec<_>>();
    record_convergence(&mut r, "xp_minus_i", &col(0), &h, min_order);
    let r2 = col(1);
    for (k, v) in r2.iter().enumerate() {
        r.push(format!("xx.level{k}"), *v, Limit::AtMost(0.0));
    }
    record_convergence(&mut r, "pp", &col(2), &h, min_order);
    Ok(r.finish())
}

/// `e1 = ‖P_α u - U*(-i∂_α U u)‖/‖u‖` and `e2 = ‖X_α u - U*(X_α U u)‖/‖u‖`
/// on one lattice pair, maximized over bumps and α.
pub fn unitary_residuals(
    m: &DiffeoMap,
    gx: &Arc<Grid>,
    gi: &Arc<Grid>,
    bumps: &[BumpSpec],
) -> Result<[f64; 2]> {
    let n = m.dim();
    let field = JacobianField::sample(m, gx)?;
    let pre = preimages(m, gi)?;
    let mut out = [0.0f64; 2];
    for spec in bumps {
        let u = bump(gx, spec)?;
        let nu = u.norm();
        let t = unitary_forward_with(m, gx, gi, &u, &pre)?;
        for a in 0..n {
            let pu = momentum_from_field(&field, gx, a).apply(&u)?;
            let dt = flat_momentum_in_image(gi, a).apply(&t)?;
            out[0] = out[0].max(rel_norm(&pu, &unitary_inverse(m, gx, gi, &dt)?, nu)?);
            let xu = position_op(m, gx, a)?.apply(&u)?;
            let coords: Vec<f64> = (0..gi.total()).map(|k| gi.point(k)[a]).collect();
            let mt = t.mul_real(&coords);
            out[1] = out[1].max(rel_norm(&xu, &unitary_inverse(m, gx, gi, &mt)?, nu)?);
        }
    }
    Ok(out)
}

pub fn check_unitary_equivalence(
    m: &DiffeoMap,
    pairs: &[(Arc<Grid>, Arc<Grid>)],
    bumps: &[BumpSpec],
    min_order: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("unitary_equivalence", min_order);
    let mut e = Vec::new();
    for (gx, gi) in pairs {
        e.push(unitary_residuals(m, gx, gi, bumps)?);
    }
    let h: Vec<f64> = pairs.iter().map(|(g, _)| g.max_spacing()).collect();
    record_convergence(&mut r, "e1_momentum", &e.iter().map(|v| v[0]).collect::<Vec<_>>(), &h, min_order);
    record_convergence(&mut r, "e2_position", &e.iter().map(|v| v[1]).collect::<Vec<_>>(), &h, min_order);
    Ok(r.finish())
}

/// Isometry defect `|‖Uu‖² - ‖u‖²|/‖u‖²` and round-trip error
/// `‖U*Uu - u‖/‖u‖` on one lattice pair, maximized over bumps.
pub fn isometry_residuals(
    m: &DiffeoMap,
    gx: &Arc<Grid>,
    gi: &Arc<Grid>,
    bumps: &[BumpSpec],
) -> Result<[f64; 2]> {
    let pre = preimages(m, gi)?;
    let mut out = [0.0f64; 2];
    for spec in bumps {
        let u = bump(gx, spec)?;
        let t = unitary_forward_with(m, gx, gi, &u, &pre)?;
        let nu2 = inner(&u, &u)?.re;
        out[0] = out[0].max((inner(&t, &t)?.re - nu2).abs() / nu2);
        let back = unitary_inverse(m, gx, gi, &t)?;
        out[1] = out[1].max(rel_norm(&back, &u, nu2.sqrt())?);
    }
    Ok(out)
}

pub fn check_isometry(
    m: &DiffeoMap,
    pairs: &[(Arc<Grid>, Arc<Grid>)],
    bumps: &[BumpSpec],
    min_order: f64,
    isometry_max: f64,
    round_trip_max: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("isometry", isometry_max);
    let mut e = Vec::new();
    for (gx, gi) in pairs {
        e.push(isometry_residuals(m, gx, gi, bumps)?);
    }
    let h: Vec<f64> = pairs.iter().map(|(g, _)| g.max_spacing()).collect();
    let iso: Vec<f64> = e.iter().map(|v| v[0]).collect();
    let rt: Vec<f64> = e.iter().map(|v| v[1]).collect();
    r.push("isometry.max", iso.iter().copied().fold(0.0, f64::max), Limit::AtMost(isometry_max));
    record_convergence(&mut r, "isometry", &iso, &h, min_order);
    r.push("round_trip.finest", *rt.last().expect("levels"), Limit::AtMost(round_trip_max));
    record_convergence(&mut r, "round_trip", &rt, &h, min_order);
    Ok(r.finish())
}

/// Agreement of the two routes to the divergence term at random points.
pub fn check_lemma_cal(
    m: &DiffeoMap,
    bounds: &[(f64, f64)],
    points: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("lemma_cal", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = sample_box(&mut rng, bounds);
        for a in 0..m.dim() {
            let direct = m.divergence_direct(&x, a)?;
            let lemma = m.divergence_via_lemma(&x, a)?;
            worst = worst.max((direct - lemma).abs() / (1.0 + direct.abs()));
        }
    }
    r.push("max_relative_difference", worst, Limit::AtMost(tolerance));
    r.note("points", points.to_string());
    Ok(r.finish())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln ∫_{[-L,L]ⁿ} J(x) e^{2s f_α(x)} dx` by the trapezoid rule, summed in
/// log space.
pub fn kernel_log_integral(
    m: &DiffeoMap,
    alpha: usize,
    sign: f64,
    l: f64,
    cells_per_unit: f64,
) -> Result<f64> {
    let n = m.dim();
    let cap = (KERNEL_MAX_POINTS as f64).powf(1.0 / n as f64).floor() as usize;
    let count = ((2.0 * l * cells_per_unit).ceil() as usize + 1).clamp(3, cap);
    let g = Grid::cube(n, -l, l, count)?;
    let f = &m.forward()[alpha];
    let ln_h: f64 = g.spacing().iter().map(|h| h.ln()).sum();
    let mut terms = Vec::with_capacity(g.total());
    for k in 0..g.total() {
        let idx = g.multi_index(k);
        let x = g.point(k);
        let ends = idx.iter().filter(|&&i| i == 0 || i == count - 1).count();
        let ln_w = ln_h - ends as f64 * std::f64::consts::LN_2;
        terms.push(ln_w + m.det_at(&x)?.ln() + 2.0 * sign * f.eval(&x)?);
    }
    Ok(log_sum_exp(&terms))
}

/// Growth of the norm integrals of the kernel candidates `√J e^{±X_α}`.
pub fn check_kernel_growth(
    m: &DiffeoMap,
    l_values: &[f64],
    growth_min: f64,
    cells_per_unit: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("kernel_growth", growth_min);
    r.witness = true;
    for a in 0..m.dim() {
        for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
            let label = format!("X{}{tag}", a + 1);
            let logs = l_values
                .iter()
                .map(|&l| kernel_log_integral(m, a, sign, l, cells_per_unit))
                .collect::<Result<Vec<_>>>()?;
            for (l, v) in l_values.iter().zip(&logs) {
                r.push(format!("{label}.log_integral[L={l}]"), *v, Limit::Info);
            }
            let min_log_ratio = logs
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            r.push(
                format!("{label}.min_ratio"),
                min_log_ratio.exp(),
                Limit::AtLeast(growth_min),
            );
        }
    }
    Ok(r.finish())
}

/// Largest distance between consecutive eigenvalues, restricted to the
/// window; the window edges count as ends of the spectrum's gaps.
pub fn spectral_gap(eigenvalues: &[f64], window: (f64, f64)) -> f64 {
    let mut e: Vec<f64> = eigenvalues.to_vec();
    e.sort_by(f64::total_cmp);
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(e);
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .map(|w| (w[1].min(window.1) - w[0].max(window.0)).max(0.0))
        .fold(0.0, f64::max)
}

pub fn hermitian_eigenvalues(op: &LinearOperator) -> Result<Vec<f64>> {
    let dense: DMatrix<Complex64> = op.to_dense()?;
    Ok(dense.symmetric_eigenvalues().iter().copied().collect())
}

/// Eigenvalue gaps of `X_α` and `P_α` shrinking as the truncation grows.
pub fn check_spectral_coverage(
    m: &DiffeoMap,
    levels: &[CubeLevel],
    window: (f64, f64),
) -> Result<CheckResult> {
    let mut r = CheckResult::new("spectral_coverage", 1.0);
    r.witness = true;
    r.note("window", format!("[{}, {}]", window.0, window.1));
    for a in 0..m.dim() {
        let mut gaps = [Vec::new(), Vec::new()];
        for l in levels {
            let g = Arc::new(Grid::cube(m.dim(), l.lo, l.hi, l.count)?);
            let x: Vec<f64> = position_op(m, &g, a)?
                .to_dense()?
                .diagonal()
                .iter()
                .map(|z| z.re)
                .collect();
            gaps[0].push(spectral_gap(&x, window));
            let p = crate::operators::momentum_op(m, &g, a)?;
            gaps[1].push(spectral_gap(&hermitian_eigenvalues(&p)?, window));
        }
        for (tag, gs) in ["X", "P"].iter().zip(&gaps) {
            let label = format!("{tag}{}", a + 1);
            for (k, v) in gs.iter().enumerate() {
                r.push(format!("{label}.gap.level{k}"), *v, Limit::Info);
            }
            for k in 0..gs.len() - 1 {
                r.push(
                    format!("{label}.gap_ratio{k}{}", k + 1),
                    gs[k + 1] / gs[k],
                    Limit::Below(1.0),
                );
            }
        }
    }
    Ok(r.finish())
}

/// Classical Poisson brackets of the transformed variables at random
/// phase-space points, `p` uniform in `[-1, 1]ⁿ`.
pub fn check_classical_brackets(
    m: &DiffeoMap,
    bounds: &[(f64, f64)],
    points: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("classical_brackets", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.dim();
    let mut worst = [0.0f64; 3];
    for _ in 0..points {
        let x = sample_box(&mut rng, bounds);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for a in 0..n {
            for b in 0..n {
                let res = poisson_residuals(m, &x, &p, a, b)?;
                worst[0] = worst[0].max(res.xp);
                worst[1] = worst[1].max(res.xx);
                worst[2] = worst[2].max(res.pp);
            }
        }
    }
    for (name, v) in ["xp_minus_delta", "xx", "pp"].iter().zip(worst) {
        r.push(*name, v, Limit::AtMost(tolerance));
    }
    Ok(r.finish())
}

/// Global diffeomorphism evidence on a sample lattice.
pub fn check_validate(m: &DiffeoMap, bounds: &[(f64, f64)], samples: usize) -> CheckResult {
    let report = m.validate_global(bounds, samples);
    let mut r = CheckResult::new("validate", 0.0);
    r.push("violations", report.violations.len() as f64, Limit::AtMost(0.0));
    r.push("samples", report.samples as f64, Limit::Info);
    let singular = report.singular_points().count();
    r.push("singular_points", singular as f64, Limit::Info);
    r.note("summary", report.summary());
    // singular-Jacobian evidence first, nearest the origin first, then up
    // to five violations of other kinds
    let norm = |v: &&crate::diffeo::Violation| v.point.iter().map(|x| x * x).sum::<f64>();
    let mut singular: Vec<_> = report.singular_points().collect();
    singular.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
    let others = report.violations.iter().filter(|v| !is_singular(&v.kind));
    for (i, v) in singular.into_iter().take(5).chain(others.take(5)).enumerate() {
        r.note(format!("violation{i}"), v.to_string());
    }
    r.finish()
}

/// Symbolic momentum coefficients against user-supplied closed forms on a
/// lattice.
pub fn check_closed_form(
    m: &DiffeoMap,
    alpha: usize,
    first_order: &[Expr],
    zeroth_order: &Expr,
    g: &Grid,
    tolerance: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("closed_form", tolerance);
    let c = symbolic_momentum_coefficients(m, alpha)?;
    let zeroth = c.zeroth_order();
    let mut first_err = 0.0f64;
    let mut zeroth_err = 0.0f64;
    for x in g.points() {
        for (sym, closed) in c.first_order.iter().zip(first_order) {
            first_err = first_err.max((sym.eval(&x)? - closed.eval(&x)?).abs());
        }
        zeroth_err = zeroth_err.max((zeroth.eval(&x)? - zeroth_order.eval(&x)?).abs());
    }
    r.push("first_order.max_abs", first_err, Limit::AtMost(tolerance));
    r.push("zeroth_order.max_abs", zeroth_err, Limit::AtMost(tolerance));
    for (b, e) in c.first_order.iter().enumerate() {
        r.note(format!("symbolic.c{}", b + 1), e.to_string());
    }
    r.note("symbolic.zeroth", zeroth.to_string());
    Ok(r.finish())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn skip_reason(v: &CheckResult) -> String {
    let singular = v
        .context
        .iter()
        .filter(|(k, _)| k.starts_with("violation"))
        .map(|(_, s)| s.as_str())
        .find(|s| s.starts_with("SingularJacobian"));
    match singular {
        Some(s) => format!("skipped: map failed global validation ({s})"),
        None => "skipped: map failed global validation".into(),
    }
}

fn run_check(spec: &CheckSpec, cfg: &SuiteConfig, m: &DiffeoMap) -> Result<CheckResult> {
    let grids = || -> Result<Vec<Arc<Grid>>> {
        (0..cfg.grid_levels.len()).map(|k| cfg.grid(k).map(Arc::new)).collect()
    };
    let pairs = || -> Result<Vec<(Arc<Grid>, Arc<Grid>)>> {
        (0..cfg.grid_levels.len())
            .map(|k| Ok((Arc::new(cfg.grid(k)?), Arc::new(cfg.image_grid(m, k)?))))
            .collect()
    };
    match spec {
        CheckSpec::Validate { bounds, samples } => Ok(check_validate(m, bounds, *samples)),
        CheckSpec::LemmaCal {
            bounds,
            points,
            tolerance,
        } => check_lemma_cal(m, bounds, *points, cfg.seed, *tolerance),
        CheckSpec::Hermiticity {
            tolerance,
            dense_tolerance,
        } => hermiticity_suite(m, &grids()?, &cfg.bumps, *tolerance, *dense_tolerance),
        CheckSpec::Ccr { min_order } => check_ccr(m, &grids()?, &cfg.bumps, *min_order),
        CheckSpec::UnitaryEquivalence { min_order } => {
            check_unitary_equivalence(m, &pairs()?, &cfg.bumps, *min_order)
        }
        CheckSpec::Isometry {
            min_order,
            isometry_max,
            round_trip_max,
        } => check_isometry(m, &pairs()?, &cfg.bumps, *min_order, *isometry_max, *round_trip_max),
        CheckSpec::KernelGrowth {
            l_values,
            growth_min,
            cells_per_unit,
        } => check_kernel_growth(m, l_values, *growth_min, *cells_per_unit),
        CheckSpec::SpectralCoverage { levels, window } => check_spectral_coverage(m, levels, *window),
        CheckSpec::ClassicalBrackets {
            bounds,
            points,
            tolerance,
        } => check_classical_brackets(m, bounds, *points, cfg.seed, *tolerance),
        CheckSpec::ClosedForm {
            alpha,
            first_order,
            zeroth_order,
            bounds,
            count,
            tolerance,
        } => {
            let n = m.dim();
            let first = first_order
                .iter()
                .map(|s| expr::parse(s, n))
                .collect::<Result<Vec<_>>>()?;
            let zeroth = expr::parse(zeroth_order, n)?;
            let g = Grid::new(bounds.clone(), vec![*count; n])?;
            check_closed_form(m, *alpha, &first, &zeroth, &g, *tolerance)
        }
    }
}

fn headline_tolerance(spec: &CheckSpec) -> f64 {
    match spec {
        CheckSpec::Validate { .. } => 0.0,
        CheckSpec::LemmaCal { tolerance, .. }
        | CheckSpec::Hermiticity { tolerance, .. }
        | CheckSpec::ClassicalBrackets { tolerance, .. }
        | CheckSpec::ClosedForm { tolerance, .. } => *tolerance,
        CheckSpec::Ccr { min_order } | CheckSpec::UnitaryEquivalence { min_order } => *min_order,
        CheckSpec::Isometry { isometry_max, .. } => *isometry_max,
        CheckSpec::KernelGrowth { growth_min, .. } => *growth_min,
        CheckSpec::SpectralCoverage { .. } => 1.0,
    }
}

/// Runs the selected checks in order. Failing checks are recorded, never
/// fatal; only configuration problems abort.
pub fn run_suite(cfg: &SuiteConfig) -> Result<VerificationReport> {
    if cfg.checks.is_empty() {
        return Err(Error::config("suite.checks", "at least one check must be selected"));
    }
    let m = cfg.map()?;
    let started_at = now();
    let mut checks: Vec<CheckResult> = Vec::with_capacity(cfg.checks.len());
    let mut invalid: Option<String> = None;
    for spec in &cfg.checks {
        let clock = Instant::now();
        let mut result = match (&invalid, spec.needs_valid_map()) {
            (Some(reason), true) => {
                CheckResult::failed(spec.name(), headline_tolerance(spec), reason.clone())
            }
            _ => match run_check(spec, cfg, &m) {
                Ok(r) => r,
                Err(e) => CheckResult::failed(spec.name(), headline_tolerance(spec), e.to_string()),
            },
        };
        result.runtime_ms = clock.elapsed().as_millis() as u64;
        if matches!(spec, CheckSpec::Validate { .. }) && !result.pass {
            invalid = Some(skip_reason(&result));
        }
        checks.push(result);
    }
    let overall_pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        config: cfg.echo(),
        checks,
        overall_pass,
        started_at,
        finished_at: now(),
    })
}

/// Whether a validation violation is singular-Jacobian evidence.
pub fn is_singular(kind: &ViolationKind) -> bool {
    matches!(kind, ViolationKind::SingularJacobian { .. })
}
