//! Suite configuration: a flat `[section]` / `key = value` text format.
//!
//! Grammar (one item per line, surrounding blanks ignored):
//!
//! ```text
//! line     := blank | comment | header | pair
//! comment  := '#' ...                 (also ends any other line)
//! header   := '[' name ']'            name := [a-z][a-z0-9_]* ('.' [a-z][a-z0-9_]*)?
//! pair     := key '=' value           key  := [a-z][a-z0-9_]*
//! ```
//!
//! Every key appears at most once per section, except `bump`. Lists use
//! `,` between items and `;` between per-axis or per-component entries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::diffeo::{DiffeoMap, DEFAULT_J_MIN};
use crate::error::{Error, Result};
use crate::grid::{BumpSpec, Grid};

pub const DEFAULT_SEED: u64 = 42;

fn cfg_err(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::config(path, reason)
}

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Cubic lattice `[lo, hi]ⁿ` with `count` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeLevel {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// One selected check and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckSpec {
    Validate {
        bounds: Vec<(f64, f64)>,
        samples: usize,
    },
    LemmaCal {
        bounds: Vec<(f64, f64)>,
        points: usize,
        tolerance: f64,
    },
    Hermiticity {
        tolerance: f64,
        dense_tolerance: f64,
    },
    Ccr {
        min_order: f64,
    },
    UnitaryEquivalence {
        min_order: f64,
    },
    Isometry {
        min_order: f64,
        isometry_max: f64,
        round_trip_max: f64,
    },
    KernelGrowth {
        l_values: Vec<f64>,
        growth_min: f64,
        cells_per_unit: f64,
    },
    SpectralCoverage {
        levels: Vec<CubeLevel>,
        window: (f64, f64),
    },
    ClassicalBrackets {
        bounds: Vec<(f64, f64)>,
        points: usize,
        tolerance: f64,
    },
    ClosedForm {
        alpha: usize,
        first_order: Vec<String>,
        zeroth_order: String,
        bounds: Vec<(f64, f64)>,
        count: usize,
        tolerance: f64,
    },
}

pub const CHECK_NAMES: [&str; 10] = [
    "validate",
    "lemma_cal",
    "hermiticity",
    "ccr",
    "unitary_equivalence",
    "isometry",
    "kernel_growth",
    "spectral_coverage",
    "classical_brackets",
    "closed_form",
];

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::Validate { .. } => "validate",
            CheckSpec::LemmaCal { .. } => "lemma_cal",
            CheckSpec::Hermiticity { .. } => "hermiticity",
            CheckSpec::Ccr { .. } => "ccr",
            CheckSpec::UnitaryEquivalence { .. } => "unitary_equivalence",
            CheckSpec::Isometry { .. } => "isometry",
            CheckSpec::KernelGrowth { .. } => "kernel_growth",
            CheckSpec::SpectralCoverage { .. } => "spectral_coverage",
            CheckSpec::ClassicalBrackets { .. } => "classical_brackets",
            CheckSpec::ClosedForm { .. } => "closed_form",
        }
    }

    /// Whether the check builds operators from the map and so is skipped
    /// after a failed global validation.
    pub fn needs_valid_map(&self) -> bool {
        !matches!(self, CheckSpec::Validate { .. })
    }
}

/// A fully validated suite description.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub name: String,
    pub dimension: usize,
    pub forward: Vec<String>,
    pub inverse: Option<Vec<String>>,
    pub j_min: f64,
    pub seed: u64,
    /// Source lattice, one entry per refinement level.
    pub grid_bounds: Vec<(f64, f64)>,
    pub grid_levels: Vec<Vec<usize>>,
    /// Image lattice; bounds default to the shrunk bounding box of the image.
    pub image_bounds: Option<Vec<(f64, f64)>>,
    pub image_levels: Option<Vec<Vec<usize>>>,
    pub bumps: Vec<BumpSpec>,
    pub checks: Vec<CheckSpec>,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

impl SuiteConfig {
    pub fn map(&self) -> Result<DiffeoMap> {
        let fwd: Vec<&str> = self.forward.iter().map(String::as_str).collect();
        let inv: Option<Vec<&str>> = self
            .inverse
            .as_ref()
            .map(|v| v.iter().map(String::as_str).collect());
        DiffeoMap::parse(self.dimension, &fwd, inv.as_deref(), self.j_min)
    }

    pub fn grid(&self, level: usize) -> Result<Grid> {
        Grid::new(self.grid_bounds.clone(), self.grid_levels[level].clone())
    }

    /// Image lattice of a level, paired with the source lattice of the
    /// same level.
    pub fn image_grid(&self, m: &DiffeoMap, level: usize) -> Result<Grid> {
        let counts = match &self.image_levels {
            Some(l) => l[level].clone(),
            None => self.grid_levels[level].clone(),
        };
        match &self.image_bounds {
            Some(b) => Grid::new(b.clone(), counts),
            None => crate::operators::default_image_grid(m, &self.grid(level)?, counts),
        }
    }

    /// Configuration echo for reports, as section → key → value.
    pub fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut put = |s: &str, k: &str, v: String| {
            out.entry(s.to_string()).or_default().insert(k.to_string(), v);
        };
        put("suite", "name", self.name.clone());
        put("suite", "seed", self.seed.to_string());
        put(
            "suite",
            "checks",
            self.checks.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "),
        );
        put("map", "dimension", self.dimension.to_string());
        put("map", "forward", self.forward.join("; "));
        if let Some(inv) = &self.inverse {
            put("map", "inverse", inv.join("; "));
        }
        put("map", "j_min", format!("{:e}", self.j_min));
        put("grid", "bounds", fmt_bounds(&self.grid_bounds));
        put("grid", "levels", fmt_levels(&self.grid_levels));
        if let Some(b) = &self.image_bounds {
            put("image", "bounds", fmt_bounds(b));
        }
        if let Some(l) = &self.image_levels {
            put("image", "levels", fmt_levels(l));
        }
        put(
            "bumps",
            "bump",
            self.bumps
                .iter()
                .map(|b| format!("{} / {}", join_f(&b.center, " "), join_f(&b.radius, " ")))
                .collect::<Vec<_>>()
                .join(", "),
        );
        for c in &self.checks {
            let s = format!("check.{}", c.name());
            for (k, v) in check_echo(c) {
                put(&s, k, v);
            }
        }
        out
    }
}

fn join_f(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn fmt_bounds(b: &[(f64, f64)]) -> String {
    b.iter()
        .map(|(lo, hi)| format!("{lo} {hi}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn fmt_levels(l: &[Vec<usize>]) -> String {
    l.iter()
        .map(|c| c.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_echo(c: &CheckSpec) -> Vec<(&'static str, String)> {
    match c {
        CheckSpec::Validate { bounds, samples } => {
            vec![("box", fmt_bounds(bounds)), ("samples", samples.to_string())]
        }
        CheckSpec::LemmaCal {
            bounds,
            points,
            tolerance,
        }
        | CheckSpec::ClassicalBrackets {
            bounds,
            points,
            tolerance,
        } => vec![
            ("box", fmt_bounds(bounds)),
            ("points", points.to_string()),
            ("tolerance", format!("{tolerance:e}")),
        ],
        CheckSpec::Hermiticity {
            tolerance,
            dense_tolerance,
        } => vec![
            ("tolerance", format!("{tolerance:e}")),
            ("dense_tolerance", format!("{dense_tolerance:e}")),
        ],
        CheckSpec::Ccr { min_order } | CheckSpec::UnitaryEquivalence { min_order } => {
            vec![("min_order", min_order.to_string())]
        }
        CheckSpec::Isometry {
            min_order,
            isometry_max,
            round_trip_max,
        } => vec![
            ("min_order", min_order.to_string()),
            ("isometry_max", format!("{isometry_max:e}")),
            ("round_trip_max", format!("{round_trip_max:e}")),
        ],
        CheckSpec::KernelGrowth {
            l_values,
            growth_min,
            cells_per_unit,
        } => vec![
            ("l_values", join_f(l_values, ", ")),
            ("growth_min", growth_min.to_string()),
            ("cells_per_unit", cells_per_unit.to_string()),
        ],
        CheckSpec::SpectralCoverage { levels, window } => vec![
            (
                "levels",
                levels
                    .iter()
                    .map(|l| format!("{} {} {}", l.lo, l.hi, l.count))
                    .collect::<Vec<_>>()
                    .join(", "),
            ),
            ("window", format!("{} {}", window.0, window.1)),
        ],
        CheckSpec::ClosedForm {
            alpha,
            first_order,
            zeroth_order,
            bounds,
            count,
            tolerance,
        } => vec![
            ("alpha", (alpha + 1).to_string()),
            ("first", first_order.join("; ")),
            ("zeroth", zeroth_order.clone()),
            ("bounds", fmt_bounds(bounds)),
            ("count", count.to_string()),
            ("tolerance", format!("{tolerance:e}")),
        ],
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SuiteConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(path.display().to_string(), format!("cannot read file: {e}")))?;
    parse_config(&text)
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    pairs: Vec<(String, String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let pos = self.pairs.iter().position(|(k, _, _)| k == key)?;
        let (_, v, line) = self.pairs.remove(pos);
        Some((v, line))
    }

    fn take_all(&mut self, key: &str) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        while let Some(v) = self.take(key) {
            out.push(v);
        }
        out
    }
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn split_sections(text: &str) -> Result<Vec<(String, Section)>> {
    let mut sections: Vec<(String, Section)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                cfg_err(format!("line {lineno}"), "section header must end with ']'")
            })?;
            let valid = match name.split_once('.') {
                Some((a, b)) => is_name(a) && is_name(b),
                None => is_name(name),
            };
            if !valid {
                return Err(cfg_err(
                    format!("line {lineno}"),
                    format!("invalid section name '{name}'"),
                ));
            }
            if sections.iter().any(|(n, _)| n == name) {
                return Err(cfg_err(name, format!("section repeated at line {lineno}")));
            }
            sections.push((
                name.to_string(),
                Section {
                    line: lineno,
                    pairs: Vec::new(),
                },
            ));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            cfg_err(format!("line {lineno}"), "expected '[section]' or 'key = value'")
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !is_name(key) {
            return Err(cfg_err(format!("line {lineno}"), format!("invalid key '{key}'")));
        }
        let Some((sname, section)) = sections.last_mut() else {
            return Err(cfg_err(format!("line {lineno}"), "key outside of any section"));
        };
        if key != "bump" && section.pairs.iter().any(|(k, _, _)| k == key) {
            return Err(cfg_err(
                format!("{sname}.{key}"),
                format!("key repeated at line {lineno}"),
            ));
        }
        section.pairs.push((key.to_string(), value.to_string(), lineno));
    }
    Ok(sections)
}

struct Reader {
    sections: Vec<(String, Section)>,
}

impl Reader {
    fn section(&mut self, name: &str) -> Option<Section> {
        let pos = self.sections.iter().position(|(n, _)| n == name)?;
        Some(self.sections.remove(pos).1)
    }
}

fn finish(name: &str, section: Section) -> Result<()> {
    match section.pairs.first() {
        Some((k, _, line)) => Err(cfg_err(
            format!("{name}.{k}"),
            format!("unknown key at line {line}"),
        )),
        None => Ok(()),
    }
}

fn required(section: &mut Section, sname: &str, key: &str) -> Result<String> {
    section
        .take(key)
        .map(|(v, _)| v)
        .ok_or_else(|| cfg_err(format!("{sname}.{key}"), "missing required field"))
}

fn parse_f64(path: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| cfg_err(path, format!("'{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(cfg_err(path, "value must be finite"));
    }
    Ok(v)
}

fn parse_usize(path: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(path, format!("'{}' is not a non-negative integer", s.trim())))
}

fn parse_positive(path: &str, s: &str) -> Result<f64> {
    let v = parse_f64(path, s)?;
    if v <= 0.0 {
        return Err(cfg_err(path, "value must be positive"));
    }
    Ok(v)
}

fn list(s: &str, sep: char) -> Vec<&str> {
    s.split(sep).map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn parse_bounds(path: &str, s: &str, n: usize) -> Result<Vec<(f64, f64)>> {
    let axes = list(s, ';');
    let axes = if axes.len() == 1 && n > 1 {
        vec![axes[0]; n]
    } else {
        axes
    };
    if axes.len() != n {
        return Err(cfg_err(
            path,
            format!("expected {n} axis bounds 'lo hi', found {}", axes.len()),
        ));
    }
    axes.iter()
        .map(|a| {
            let v: Vec<&str> = a.split_whitespace().collect();
            if v.len() != 2 {
                return Err(cfg_err(path, format!("axis bounds '{a}' must be 'lo hi'")));
            }
            let (lo, hi) = (parse_f64(path, v[0])?, parse_f64(path, v[1])?);
            if lo >= hi {
                return Err(cfg_err(path, format!("lower bound {lo} not below upper bound {hi}")));
            }
            Ok((lo, hi))
        })
        .collect()
}

fn parse_levels(path: &str, s: &str, n: usize) -> Result<Vec<Vec<usize>>> {
    let levels = list(s, ',');
    if levels.is_empty() {
        return Err(cfg_err(path, "at least one level required"));
    }
    levels
        .iter()
        .map(|l| {
            let c: Vec<usize> = l
                .split_whitespace()
                .map(|t| parse_usize(path, t))
                .collect::<Result<_>>()?;
            match c.len() {
                1 => Ok(vec![c[0]; n]),
                k if k == n => Ok(c),
                k => Err(cfg_err(path, format!("level '{l}' has {k} counts for dimension {n}"))),
            }
        })
        .collect()
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<SuiteConfig> {
    let mut r = Reader {
        sections: split_sections(text)?,
    };

    let mut map = r
        .section("map")
        .ok_or_else(|| cfg_err("map", "missing required section"))?;
    let dim_s = required(&mut map, "map", "dimension")?;
    let dimension = parse_usize("map.dimension", &dim_s)?;
    if dimension == 0 {
        return Err(cfg_err("map.dimension", "dimension must be at least 1"));
    }
    let forward: Vec<String> = list(&required(&mut map, "map", "forward")?, ';')
        .into_iter()
        .map(String::from)
        .collect();
    if forward.len() != dimension {
        return Err(cfg_err(
            "map.forward",
            format!("dimension is {dimension} but {} components were given", forward.len()),
        ));
    }
    let inverse = match map.take("inverse") {
        Some((v, _)) => {
            let inv: Vec<String> = list(&v, ';').into_iter().map(String::from).collect();
            if inv.len() != dimension {
                return Err(cfg_err(
                    "map.inverse",
                    format!("dimension is {dimension} but {} components were given", inv.len()),
                ));
            }
            Some(inv)
        }
        None => None,
    };
    let j_min = match map.take("j_min") {
        Some((v, _)) => parse_positive("map.j_min", &v)?,
        None => DEFAULT_J_MIN,
    };
    finish("map", map)?;

    let mut suite = r
        .section("suite")
        .ok_or_else(|| cfg_err("suite", "missing required section"))?;
    let name = suite.take("name").map(|(v, _)| v).unwrap_or_else(|| "suite".into());
    let seed = match suite.take("seed") {
        Some((v, _)) => v
            .parse()
            .map_err(|_| cfg_err("suite.seed", format!("'{v}' is not an unsigned 64-bit integer")))?,
        None => DEFAULT_SEED,
    };
    let check_names: Vec<String> = list(&required(&mut suite, "suite", "checks")?, ',')
        .into_iter()
        .map(String::from)
        .collect();
    if check_names.is_empty() {
        return Err(cfg_err("suite.checks", "at least one check must be selected"));
    }
    for (i, c) in check_names.iter().enumerate() {
        if !CHECK_NAMES.contains(&c.as_str()) {
            return Err(cfg_err(
                "suite.checks",
                format!("unknown check '{c}'; known: {}", CHECK_NAMES.join(", ")),
            ));
        }
        if check_names[..i].contains(c) {
            return Err(cfg_err("suite.checks", format!("check '{c}' listed twice")));
        }
    }
    finish("suite", suite)?;

    let mut grid = r
        .section("grid")
        .ok_or_else(|| cfg_err("grid", "missing required section"))?;
    let grid_bounds = parse_bounds("grid.bounds", &required(&mut grid, "grid", "bounds")?, dimension)?;
    let grid_levels = parse_levels("grid.levels", &required(&mut grid, "grid", "levels")?, dimension)?;
    finish("grid", grid)?;
    for (i, l) in grid_levels.iter().enumerate() {
        Grid::new(grid_bounds.clone(), l.clone())
            .map_err(|e| cfg_err(format!("grid.levels[{i}]"), e.to_string()))?;
    }

    let (image_bounds, image_levels) = match r.section("image") {
        Some(mut img) => {
            let b = match img.take("bounds") {
                Some((v, _)) => Some(parse_bounds("image.bounds", &v, dimension)?),
                None => None,
            };
            let l = match img.take("levels") {
                Some((v, _)) => {
                    let l = parse_levels("image.levels", &v, dimension)?;
                    if l.len() != grid_levels.len() {
                        return Err(cfg_err(
                            "image.levels",
                            format!("{} levels given, grid has {}", l.len(), grid_levels.len()),
                        ));
                    }
                    Some(l)
                }
                None => None,
            };
            finish("image", img)?;
            (b, l)
        }
        None => (None, None),
    };

    let mut bumps = Vec::new();
    if let Some(mut b) = r.section("bumps") {
        for (i, (v, _)) in b.take_all("bump").into_iter().enumerate() {
            let path = format!("bumps.bump[{i}]");
            let (c, rad) = v
                .split_once('/')
                .ok_or_else(|| cfg_err(&path, "expected 'center... / radius...'"))?;
            let center: Vec<f64> = c
                .split_whitespace()
                .map(|t| parse_f64(&path, t))
                .collect::<Result<_>>()?;
            let mut radius: Vec<f64> = rad
                .split_whitespace()
                .map(|t| parse_positive(&path, t))
                .collect::<Result<_>>()?;
            if radius.len() == 1 {
                radius = vec![radius[0]; dimension];
            }
            if center.len() != dimension || radius.len() != dimension {
                return Err(cfg_err(
                    &path,
                    format!("center and radius must have {dimension} entries"),
                ));
            }
            let spec = BumpSpec::new(center, radius);
            for (k, l) in grid_levels.iter().enumerate() {
                let g = Grid::new(grid_bounds.clone(), l.clone())?;
                spec.validate(&g)
                    .map_err(|e| cfg_err(&path, format!("on grid level {k}: {e}")))?;
            }
            bumps.push(spec);
        }
        finish("bumps", b)?;
    }

    let (output_path, format) = match r.section("output") {
        Some(mut o) => {
            let p = o.take("path").map(|(v, _)| PathBuf::from(v));
            let f = match o.take("format") {
                Some((v, _)) => Format::parse(&v)
                    .ok_or_else(|| cfg_err("output.format", format!("'{v}' is not json or csv")))?,
                None => Format::Json,
            };
            finish("output", o)?;
            (p, f)
        }
        None => (None, Format::Json),
    };

    let cube = |lo: f64, hi: f64| vec![(lo, hi); dimension];
    let mut checks = Vec::new();
    for cname in &check_names {
        let sname = format!("check.{cname}");
        let mut s = r.section(&sname).unwrap_or_default();
        let p = |k: &str| format!("{sname}.{k}");
        let f64_or = |s: &mut Section, k: &str, d: f64| -> Result<f64> {
            match s.take(k) {
                Some((v, _)) => parse_positive(&p(k), &v),
                None => Ok(d),
            }
        };
        let usize_or = |s: &mut Section, k: &str, d: usize| -> Result<usize> {
            match s.take(k) {
                Some((v, _)) => {
                    let n = parse_usize(&p(k), &v)?;
                    if n == 0 {
                        return Err(cfg_err(p(k), "must be positive"));
                    }
                    Ok(n)
                }
                None => Ok(d),
            }
        };
        let bounds_or = |s: &mut Section, k: &str, d: Vec<(f64, f64)>| -> Result<Vec<(f64, f64)>> {
            match s.take(k) {
                Some((v, _)) => parse_bounds(&p(k), &v, dimension),
                None => Ok(d),
            }
        };
        let needs_bumps = matches!(
            cname.as_str(),
            "hermiticity" | "ccr" | "unitary_equivalence" | "isometry"
        );
        if needs_bumps && bumps.is_empty() {
            return Err(cfg_err("bumps", format!("check '{cname}' needs at least one bump")));
        }
        let needs_three = matches!(cname.as_str(), "ccr" | "unitary_equivalence" | "isometry");
        if needs_three && grid_levels.len() < 3 {
            return Err(cfg_err(
                "grid.levels",
                format!("check '{cname}' needs three refinement levels"),
            ));
        }
        let spec = match cname.as_str() {
            "validate" => CheckSpec::Validate {
                bounds: bounds_or(&mut s, "box", grid_bounds.clone())?,
                samples: usize_or(&mut s, "samples", 21)?,
            },
            "lemma_cal" => CheckSpec::LemmaCal {
                bounds: bounds_or(&mut s, "box", cube(-3.0, 3.0))?,
                points: usize_or(&mut s, "points", 200)?,
                tolerance: f64_or(&mut s, "tolerance", 1e-9)?,
            },
            "hermiticity" => CheckSpec::Hermiticity {
                tolerance: f64_or(&mut s, "tolerance", 1e-12)?,
                dense_tolerance: f64_or(&mut s, "dense_tolerance", 1e-13)?,
            },
            "ccr" => CheckSpec::Ccr {
                min_order: f64_or(&mut s, "min_order", 1.8)?,
            },
            "unitary_equivalence" => CheckSpec::UnitaryEquivalence {
                min_order: f64_or(&mut s, "min_order", 1.0)?,
            },
            "isometry" => CheckSpec::Isometry {
                min_order: f64_or(&mut s, "min_order", 1.0)?,
                isometry_max: f64_or(&mut s, "isometry_max", 1e-4)?,
                round_trip_max: f64_or(&mut s, "round_trip_max", 1e-3)?,
            },
            "kernel_growth" => {
                let l_values = match s.take("l_values") {
                    Some((v, _)) => list(&v, ',')
                        .iter()
                        .map(|t| parse_positive(&p("l_values"), t))
                        .collect::<Result<Vec<_>>>()?,
                    None => vec![1.0, 2.0, 3.0],
                };
                if l_values.len() < 3 || l_values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(cfg_err(
                        p("l_values"),
                        "need at least three strictly increasing values",
                    ));
                }
                CheckSpec::KernelGrowth {
                    l_values,
                    growth_min: f64_or(&mut s, "growth_min", 5.0)?,
                    cells_per_unit: f64_or(&mut s, "cells_per_unit", 200.0)?,
                }
            }
            "spectral_coverage" => {
                let levels = match s.take("levels") {
                    Some((v, _)) => list(&v, ',')
                        .iter()
                        .map(|l| {
                            let t: Vec<&str> = l.split_whitespace().collect();
                            if t.len() != 3 {
                                return Err(cfg_err(p("levels"), format!("level '{l}' must be 'lo hi count'")));
                            }
                            Ok(CubeLevel {
                                lo: parse_f64(&p("levels"), t[0])?,
                                hi: parse_f64(&p("levels"), t[1])?,
                                count: parse_usize(&p("levels"), t[2])?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    None => vec![
                        CubeLevel { lo: -10.0, hi: 10.0, count: 201 },
                        CubeLevel { lo: -14.0, hi: 14.0, count: 401 },
                        CubeLevel { lo: -20.0, hi: 20.0, count: 801 },
                    ],
                };
                if levels.len() < 2 {
                    return Err(cfg_err(p("levels"), "need at least two levels"));
                }
                for (i, l) in levels.iter().enumerate() {
                    let g = Grid::cube(dimension, l.lo, l.hi, l.count)
                        .map_err(|e| cfg_err(format!("{}[{i}]", p("levels")), e.to_string()))?;
                    if g.total() > crate::linop::DENSE_LIMIT {
                        return Err(cfg_err(
                            format!("{}[{i}]", p("levels")),
                            format!("{} unknowns exceed the dense limit {}", g.total(), crate::linop::DENSE_LIMIT),
                        ));
                    }
                }
                let window = match s.take("window") {
                    Some((v, _)) => parse_bounds(&p("window"), &v, 1)?[0],
                    None => (-5.0, 5.0),
                };
                CheckSpec::SpectralCoverage { levels, window }
            }
            "classical_brackets" => CheckSpec::ClassicalBrackets {
                bounds: bounds_or(&mut s, "box", cube(-3.0, 3.0))?,
                points: usize_or(&mut s, "points", 100)?,
                tolerance: f64_or(&mut s, "tolerance", 1e-10)?,
            },
            "closed_form" => {
                let alpha = usize_or(&mut s, "alpha", 1)?;
                if alpha > dimension {
                    return Err(cfg_err(p("alpha"), format!("must be in 1..={dimension}")));
                }
                let first_order: Vec<String> = list(&required(&mut s, &sname, "first")?, ';')
                    .into_iter()
                    .map(String::from)
                    .collect();
                if first_order.len() != dimension {
                    return Err(cfg_err(p("first"), format!("need {dimension} components")));
                }
                let zeroth_order = required(&mut s, &sname, "zeroth")?;
                for (k, e) in first_order.iter().chain(std::iter::once(&zeroth_order)).enumerate() {
                    let key = if k < dimension { "first" } else { "zeroth" };
                    crate::expr::parse(e, dimension).map_err(|err| cfg_err(p(key), err.to_string()))?;
                }
                let bounds = bounds_or(&mut s, "bounds", grid_bounds.clone())?;
                let count = usize_or(&mut s, "count", 401)?;
                Grid::new(bounds.clone(), vec![count; dimension])
                    .map_err(|e| cfg_err(p("count"), e.to_string()))?;
                CheckSpec::ClosedForm {
                    alpha: alpha - 1,
                    first_order,
                    zeroth_order,
                    bounds,
                    count,
                    tolerance: f64_or(&mut s, "tolerance", 1e-12)?,
                }
            }
            _ => unreachable!("names checked above"),
        };
        finish(&sname, s)?;
        checks.push(spec);
    }

    if let Some((name, s)) = r.sections.first() {
        let reason = if name.starts_with("check.") {
            "check is configured but not selected in suite.checks"
        } else {
            "unknown section"
        };
        return Err(cfg_err(name, format!("{reason} (line {})", s.line)));
    }

    let cfg = SuiteConfig {
        name,
        dimension,
        forward,
        inverse,
        j_min,
        seed,
        grid_bounds,
        grid_levels,
        image_bounds,
        image_levels,
        bumps,
        checks,
        output_path,
        format,
    };
    let m = cfg.map().map_err(|e| match e {
        Error::Config { .. } => e,
        Error::Arity { .. } | Error::Syntax { .. } => cfg_err("map.forward", e.to_string()),
        other => cfg_err("map", other.to_string()),
    })?;
    let uses_image = cfg
        .checks
        .iter()
        .any(|c| matches!(c, CheckSpec::UnitaryEquivalence { .. } | CheckSpec::Isometry { .. }));
    if uses_image {
        for k in 0..cfg.grid_levels.len() {
            cfg.image_grid(&m, k)
                .map_err(|e| cfg_err(format!("image.levels[{k}]"), e.to_string()))?;
        }
    }
    Ok(cfg)
}
