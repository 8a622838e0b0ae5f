//! Numerical verification harness.
//!
//! Theorem checks compare residuals against declared tolerances and refine the
//! resolution to show the residuals are discretization error. Probes of open
//! conjectures live in [`probes`] and only report values with error bars.

pub mod probes;
pub mod theorems;

use crate::curve::{SampledCurve, Vec3, VectorField};
use crate::error::{BikeError, Result};
use crate::shapes::{make_curve, Shape};
use crate::spectral::fourier_resample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{Map, Value};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Theorem,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    AtMost(f64),
    AtLeast(f64),
}

impl Limit {
    fn admits(&self, v: f64) -> bool {
        match *self {
            Limit::AtMost(t) => v <= t,
            Limit::AtLeast(t) => v >= t,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub limit: Option<Limit>,
    pub pass: Option<bool>,
}

/// A probe value with an error bar.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub value: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

/// A residual under resolution refinement.
///
/// The table passes when every refinement step either lands below `floor`
/// or shows at least `min_order`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub quantity: String,
    pub floor: f64,
    pub min_order: f64,
    pub rows: Vec<ConvergenceRow>,
    pub pass: bool,
}

impl ConvergenceTable {
    pub fn new(quantity: &str, floor: f64, min_order: f64) -> Self {
        Self { quantity: quantity.into(), floor, min_order, rows: Vec::new(), pass: true }
    }

    pub fn push(&mut self, n: usize, value: f64) {
        let order = self.rows.last().map(|p| (p.value / value).ln() / (n as f64 / p.n as f64).ln());
        if let Some(o) = order {
            if !(value <= self.floor || o >= self.min_order) {
                self.pass = false;
            }
        }
        if !value.is_finite() {
            self.pass = false;
        }
        self.rows.push(ConvergenceRow { n, value, order: order.filter(|o| o.is_finite()) });
    }

    pub fn last(&self) -> Option<f64> {
        self.rows.last().map(|r| r.value)
    }
}

/// A free-form table of named columns.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, values: Vec<Value>) {
        self.rows.push(values);
    }
}

/// Machine-readable outcome of one check.
///
/// A theorem check passes when every limited residual is within its limit and
/// every convergence table passes. Probes carry no verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub kind: CheckKind,
    pub inputs: Map<String, Value>,
    pub residuals: Vec<Residual>,
    pub estimates: Vec<Estimate>,
    pub convergence: Vec<ConvergenceTable>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    pub pass: Option<bool>,
}

impl CheckReport {
    pub fn new(check: &str, kind: CheckKind) -> Self {
        Self {
            check: check.into(),
            kind,
            inputs: Map::new(),
            residuals: Vec::new(),
            estimates: Vec::new(),
            convergence: Vec::new(),
            tables: Vec::new(),
            warnings: Vec::new(),
            pass: None,
        }
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.inputs.insert(key.into(), v);
    }

    fn push(&mut self, name: &str, value: f64, limit: Option<Limit>) {
        let pass = limit.map(|l| l.admits(value));
        self.residuals.push(Residual { name: name.into(), value, limit, pass });
    }

    pub fn at_most(&mut self, name: &str, value: f64, tol: f64) {
        self.push(name, value, Some(Limit::AtMost(tol)));
    }

    pub fn at_least(&mut self, name: &str, value: f64, min: f64) {
        self.push(name, value, Some(Limit::AtLeast(min)));
    }

    /// A reported value without a limit.
    pub fn info(&mut self, name: &str, value: f64) {
        self.push(name, value, None);
    }

    pub fn estimate(&mut self, name: &str, value: f64, error: f64) {
        self.estimates.push(Estimate { name: name.into(), value, error });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.value)
    }

    pub fn estimate_of(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Names of limited residuals and convergence tables that failed.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.residuals.iter().filter(|r| r.pass == Some(false)).map(|r| r.name.clone()).collect();
        out.extend(self.convergence.iter().filter(|t| !t.pass).map(|t| format!("{} refinement", t.quantity)));
        out
    }

    pub fn finish(mut self) -> Self {
        self.pass = match self.kind {
            CheckKind::Theorem => Some(self.failures().is_empty()),
            CheckKind::Probe => None,
        };
        self
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string(self)
    }
}

/// Where a check gets its curve from, at any requested resolution.
#[derive(Debug, Clone)]
pub enum CurveSource {
    Shape(Shape),
    /// Fixed samples; other resolutions come from trigonometric interpolation.
    Samples { label: String, curve: SampledCurve },
}

impl CurveSource {
    pub fn at(&self, n: usize) -> Result<SampledCurve> {
        match self {
            CurveSource::Shape(s) => make_curve(s, n),
            CurveSource::Samples { curve, .. } if curve.len() == n => Ok(curve.clone()),
            CurveSource::Samples { curve, .. } => fourier_resample(curve, n),
        }
    }

    pub fn dim(&self) -> Result<usize> {
        match self {
            CurveSource::Shape(s) => Ok(s.trig()?.dim()),
            CurveSource::Samples { curve, .. } => Ok(curve.dim()),
        }
    }

    pub fn describe(&self) -> Value {
        match self {
            CurveSource::Shape(s) => serde_json::to_value(s).unwrap_or(Value::Null),
            CurveSource::Samples { label, curve } => {
                serde_json::json!({ "file": label, "samples": curve.len(), "dim": curve.dim() })
            }
        }
    }

    pub fn circle_radius(&self) -> Option<f64> {
        match self {
            CurveSource::Shape(Shape::Circle { radius, .. }) => Some(*radius),
            _ => None,
        }
    }
}

impl From<Shape> for CurveSource {
    fn from(s: Shape) -> Self {
        CurveSource::Shape(s)
    }
}

/// Resolutions `n/4, n/2, n`, keeping those with at least 64 samples.
pub fn levels(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 4, n / 2, n].into_iter().filter(|&m| m >= 64).collect();
    v.dedup();
    if v.is_empty() {
        v.push(n);
    }
    v
}

/// Tolerance `tol` declared at `n_ref` samples, relaxed as `1/n^2` below it.
pub fn scaled_tol(tol: f64, n_ref: usize, n: usize) -> f64 {
    let r = n_ref as f64 / n as f64;
    tol * (r * r).max(1.0)
}

/// Smooth random field: low Fourier modes in the sample index, seeded.
pub fn random_field(c: &SampledCurve, rng: &mut ChaCha8Rng, modes: usize) -> VectorField {
    let n = c.len();
    let mut coef = Vec::new();
    for k in 1..=modes {
        for _ in 0..2 {
            let mut v = Vec3::zeros();
            for axis in 0..c.dim() {
                v[axis] = rng.gen_range(-1.0..1.0) / k as f64;
            }
            coef.push(v);
        }
    }
    let vectors = (0..n)
        .map(|j| {
            let th = TAU * j as f64 / n as f64;
            (1..=modes).fold(Vec3::zeros(), |acc, k| {
                let kf = k as f64;
                acc + coef[2 * (k - 1)] * (kf * th).cos() + coef[2 * k - 1] * (kf * th).sin()
            })
        })
        .collect();
    VectorField::new(c, vectors).expect("field built on its own curve")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every check the harness can run by name.
pub const THEOREM_CHECKS: &[&str] = &[
    "monodromy-fit",
    "discrete-exactness",
    "mono-conjugacy",
    "bisymp",
    "theorem-int",
    "other-integrals",
    "bianchi",
    "zindler",
    "zflow",
    "lemma-proj",
    "sigma",
    "expansion",
    "recursion",
    "filament-flow",
];

pub const PROBES: &[&str] = &["probe-commute", "probe-depend", "probe-soliton", "circle-identity"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Theorems,
    Probes,
}

impl Suite {
    pub fn checks(self) -> &'static [&'static str] {
        match self {
            Suite::Theorems => THEOREM_CHECKS,
            Suite::Probes => PROBES,
        }
    }
}

/// Parameters shared by the named checks; `None` means the check's default.
#[derive(Debug, Clone, Default)]
pub struct CheckParams {
    pub curve: Option<CurveSource>,
    pub n: Option<usize>,
    pub l: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
}

fn unknown(name: &str) -> BikeError {
    let all: Vec<&str> = THEOREM_CHECKS.iter().chain(PROBES).copied().collect();
    BikeError::BadParams(format!("unknown check '{name}' (known: {})", all.join(", ")))
}

pub fn is_known(name: &str) -> bool {
    THEOREM_CHECKS.contains(&name) || PROBES.contains(&name)
}

/// Run a check by its harness name.
pub fn run(name: &str, p: &CheckParams) -> Result<CheckReport> {
    let seed = p.seed.unwrap_or(1);
    let curve = |default: Shape| p.curve.clone().unwrap_or(CurveSource::Shape(default));
    let perturbed = |dim: usize| Shape::Fourier { radius: 1.0, amp: 0.05, modes: 4, seed, dim };
    let n = |d: usize| p.n.unwrap_or(d);
    let grid = || p.lambda_grid.clone().unwrap_or_else(|| theorems::default_grid(8));
    match name {
        "monodromy-fit" => theorems::monodromy_fit(&curve(perturbed(3)), n(2048), p.lambda.unwrap_or(1.5)),
        "discrete-exactness" => theorems::discrete_exactness(seed, p.trials.unwrap_or(10_000), n(200)),
        "mono-conjugacy" => theorems::mono_conjugacy(&curve(perturbed(2)), n(2048), p.l.unwrap_or(0.4), &grid(), None),
        "bisymp" => theorems::bisymp(&curve(perturbed(3)), n(1024), p.l.unwrap_or(0.3), p.trials.unwrap_or(20), seed),
        "theorem-int" => theorems::theorem_int(&curve(perturbed(2)), n(1024), p.l.unwrap_or(0.4)),
        "other-integrals" => theorems::other_integrals(&curve(perturbed(3)), n(1024), p.l.unwrap_or(0.4)),
        "bianchi" => theorems::bianchi(&curve(perturbed(2)), n(1024), p.l.unwrap_or(0.3), p.lambda.unwrap_or(0.5)),
        "zindler" => theorems::zindler(&curve(Shape::circle(5.0)), n(1024), p.l.unwrap_or(6.0)),
        "zflow" => theorems::zflow(
            &curve(Shape::circle(5.0)),
            n(512),
            p.l.unwrap_or(6.0),
            p.dt.unwrap_or(1e-3),
            p.steps.unwrap_or(100),
        ),
        "lemma-proj" => theorems::lemma_proj(&curve(perturbed(3)), n(1024), None, p.trials.unwrap_or(8), seed),
        "sigma" => theorems::sigma(&curve(perturbed(2)), n(2048), &p.lambda_grid.clone().unwrap_or(vec![0.5, 0.7, 0.9])),
        "expansion" => theorems::expansion(&curve(Shape::circle(2.0)), n(1024), &p.lambda_grid.clone().unwrap_or_else(|| {
            (0..16).map(|i| 0.05 + 0.05 * i as f64).collect()
        })),
        "recursion" => theorems::recursion(
            &curve(Shape::TorusKnot { p: 2, q: 3, major: 2.0, minor: 0.5 }),
            n(2048),
        ),
        "filament-flow" => theorems::filament_flow(
            &p.curve.clone().unwrap_or(CurveSource::Shape(Shape::circle(1.0))),
            n(1024),
            p.dt.unwrap_or(1e-3),
            p.steps.unwrap_or(1000),
        ),
        "probe-commute" => probes::commute(&curve(perturbed(2)), n(128), probes::Pair::default_for(&curve(perturbed(2)))?),
        "probe-depend" => probes::depend(seed, p.trials.unwrap_or(12), n(256)),
        "probe-soliton" => probes::soliton(&curve(Shape::circle(5.0)), n(256), p.dt.unwrap_or(1e-3), p.steps.unwrap_or(100)),
        "circle-identity" => probes::circle_identity(n(1024), p.lambda_grid.as_deref()),
        _ => Err(unknown(name)),
    }
}

/// Run every check of a suite with default parameters overridden by `p`.
pub fn run_suite(suite: Suite, p: &CheckParams) -> Vec<(String, Result<CheckReport>)> {
    suite.checks().iter().map(|name| (name.to_string(), run(name, p))).collect()
}
