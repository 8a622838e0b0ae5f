//! Probes of open conjectures. They report values with error bars and never a verdict.

use super::{rng, CheckKind, CheckReport, CurveSource, Table};
use crate::curve::{SampledCurve, Vec3};
use crate::error::{BikeError, Result};
use crate::invariants::{filament_integrals, taylor_coefficient_gradient, taylor_coefficients, TAYLOR_REACH};
use crate::moebius::MoebiusMap;
use crate::par::Exec;
use crate::shapes::{make_curve, Shape};
use crate::{smooth, spectral, stencil};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::TAU;

/// A functional of a closed curve whose bracket is probed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integral {
    /// Filament integral `F1..F5`.
    Filament { index: usize },
    /// Taylor coefficient `c0..c4` of the integral of `cos(alpha)` (plane).
    Spectrum { index: usize },
    /// `tr^2 / det` of the monodromy at a bicycle length.
    Trace { lambda: f64 },
}

impl Integral {
    pub fn eval(&self, c: &SampledCurve) -> Result<f64> {
        match *self {
            Integral::Filament { index } if (1..=5).contains(&index) => Ok(filament_integrals(c).as_array()[index - 1]),
            Integral::Spectrum { index } if index <= 4 => Ok(taylor_coefficients(c, Exec::Sequential)?.coefficients[index]),
            Integral::Trace { lambda } => Ok(smooth::monodromy(c, lambda)?.tr2_over_det()),
            _ => Err(BikeError::BadParams(format!("no such integral: {self:?}"))),
        }
    }

    /// Gradient with respect to the samples of `c`. Spectrum coefficients use
    /// the closed-form variation on the interpolant, the rest central differences.
    pub fn gradient(&self, c: &SampledCurve) -> Result<Vec<Vec3>> {
        match *self {
            Integral::Spectrum { index } => taylor_coefficient_gradient(c, index, Exec::Parallel),
            _ => finite_difference_gradient(c, self, 1e-5 * c.length() / c.len() as f64),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || BikeError::BadParams(format!("integral '{s}' is not F1..F5, c0..c4 or tr@<lambda>"));
        if let Some(rest) = s.strip_prefix("tr@") {
            let lambda: f64 = rest.parse().map_err(|_| bad())?;
            return Ok(Integral::Trace { lambda });
        }
        let (head, idx) = s.split_at(1.min(s.len()));
        let index: usize = idx.parse().map_err(|_| bad())?;
        match head {
            "F" if (1..=5).contains(&index) => Ok(Integral::Filament { index }),
            "c" if index <= 4 => Ok(Integral::Spectrum { index }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pair(pub Integral, pub Integral);

impl Pair {
    /// `{c2, c4}` in the plane, traces at two bicycle lengths in space.
    pub fn default_for(src: &CurveSource) -> Result<Self> {
        Ok(if src.dim()? == 2 {
            Pair(Integral::Spectrum { index: 2 }, Integral::Spectrum { index: 4 })
        } else {
            Pair(Integral::Trace { lambda: 0.8 }, Integral::Trace { lambda: 1.2 })
        })
    }
}

/// Sample-wise central-difference gradient of `f` at `c`.
fn finite_difference_gradient(c: &SampledCurve, f: &Integral, delta: f64) -> Result<Vec<Vec3>> {
    let n = c.len();
    let dim = c.dim();
    let parts: Vec<Result<f64>> = Exec::Parallel.map_range(n * dim, |k| {
        let (j, axis) = (k / dim, k % dim);
        let at = |s: f64| {
            let mut pts = c.points().to_vec();
            pts[j][axis] += s;
            f.eval(&SampledCurve::new(dim, pts)?)
        };
        Ok((at(delta)? - at(-delta)?) / (2.0 * delta))
    });
    let mut g = vec![Vec3::zeros(); n];
    for (k, v) in parts.into_iter().enumerate() {
        g[k / dim][k % dim] = v?;
    }
    Ok(g)
}

/// Hamiltonian field of a functional with gradient `g`: for `omega` in the
/// plane `X' = g`, for `Omega` in space `X = g x G' / |G'|^2`.
fn hamiltonian(c: &SampledCurve, g: &[Vec3]) -> Result<Vec<Vec3>> {
    if c.dim() == 2 {
        let mean: Vec3 = g.iter().sum::<Vec3>() / g.len() as f64;
        let centered: Vec<Vec3> = g.iter().map(|x| x - mean).collect();
        spectral::antiderivative(&centered, 1e-9)
    } else {
        let v = stencil::derivative(c.points());
        Ok(g.iter().zip(&v).map(|(g, v)| g.cross(v) / v.norm_squared()).collect())
    }
}

struct Bracket {
    value: f64,
    reverse: f64,
    self_first: f64,
    scale: f64,
    translation_defect: f64,
}

fn bracket(c: &SampledCurve, pair: &Pair) -> Result<Bracket> {
    let ga = pair.0.gradient(c)?;
    let gb = pair.1.gradient(c)?;
    let xa = hamiltonian(c, &ga)?;
    let xb = hamiltonian(c, &gb)?;
    let dot = |g: &[Vec3], x: &[Vec3]| g.iter().zip(x).map(|(a, b)| a.dot(b)).sum::<f64>();
    let norm = |v: &[Vec3]| v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let mean = |g: &[Vec3]| (g.iter().sum::<Vec3>()).norm() / g.iter().map(|x| x.norm()).sum::<f64>().max(1e-300);
    Ok(Bracket {
        value: dot(&ga, &xb),
        reverse: dot(&gb, &xa),
        self_first: dot(&ga, &xa),
        scale: norm(&ga) * norm(&xb),
        translation_defect: mean(&ga).max(mean(&gb)),
    })
}

fn label(i: &Integral) -> String {
    match i {
        Integral::Filament { index } => format!("F{index}"),
        Integral::Spectrum { index } => format!("c{index}"),
        Integral::Trace { lambda } => format!("tr@{lambda}"),
    }
}

/// Poisson bracket of two integrals from numerical gradients, with the
/// calibration bracket `{F1, F3}` alongside.
pub fn commute(src: &CurveSource, n: usize, pair: Pair) -> Result<CheckReport> {
    let mut r = CheckReport::new("probe-commute", CheckKind::Probe);
    r.input("curve", src.describe());
    r.input("n", n);
    r.input("pair", [label(&pair.0), label(&pair.1)]);
    let form = if src.dim()? == 2 { "omega" } else { "Omega" };
    r.input("form", form);
    let calib = Pair(Integral::Filament { index: 1 }, Integral::Filament { index: 3 });
    let mut table = Table::new("refinement", &["n", "pair", "bracket", "reverse", "self", "scale"]);
    let coarse = (n / 2).max(16);
    for (name, p) in [("calibration {F1, F3}", calib), ("probed", pair)] {
        let fine = bracket(&src.at(n)?, &p)?;
        let rough = bracket(&src.at(coarse)?, &p)?;
        for (m, b) in [(coarse, &rough), (n, &fine)] {
            table.row(vec![
                json!(m),
                json!(format!("{{{}, {}}}", label(&p.0), label(&p.1))),
                json!(b.value),
                json!(b.reverse),
                json!(b.self_first),
                json!(b.scale),
            ]);
        }
        let err = (fine.value - rough.value).abs() + (fine.value + fine.reverse).abs();
        r.estimate(&format!("{name} bracket"), fine.value, err);
        r.estimate(&format!("{name} relative bracket"), fine.value / fine.scale.max(1e-300), err / fine.scale.max(1e-300));
        r.estimate(&format!("{name} self-bracket"), fine.self_first, (fine.self_first - rough.self_first).abs());
        if fine.translation_defect > 1e-6 {
            r.warn(format!("{name}: gradient not translation invariant ({:.2e})", fine.translation_defect));
        }
    }
    r.tables.push(table);
    Ok(r.finish())
}

/// Least-squares fit `y ~ b0 + sum b_k x_k` with standard errors and R^2.
#[derive(Debug, Clone, Serialize)]
pub struct Regression {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub r_squared: f64,
}

pub fn regress(xs: &[Vec<f64>], y: &[f64]) -> Result<Regression> {
    let m = y.len();
    let p = xs.first().map(|x| x.len()).unwrap_or(0) + 1;
    if m <= p {
        return Err(BikeError::BadParams(format!("{m} samples cannot fit {p} coefficients")));
    }
    let a = DMatrix::from_fn(m, p, |i, k| if k == 0 { 1.0 } else { xs[i][k - 1] });
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let beta = svd.solve(&b, 1e-14).map_err(|e| BikeError::BadParams(e.to_string()))?;
    let resid = &b - &a * &beta;
    let rss = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / m as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let s2 = rss / (m - p) as f64;
    let cov = (a.transpose() * &a).pseudo_inverse(1e-14).map_err(|e| BikeError::BadParams(e.to_string()))?;
    Ok(Regression {
        coefficients: beta.iter().copied().collect(),
        standard_errors: (0..p).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect(),
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

/// Regression of the spectrum coefficients on the filament integrals over random curves.
pub fn depend(seed: u64, count: usize, n: usize) -> Result<CheckReport> {
    let mut r = CheckReport::new("probe-depend", CheckKind::Probe);
    r.input("seed", seed);
    r.input("curves", count);
    r.input("n", n);
    r.input("lambda_reach_times_max_curvature", TAYLOR_REACH);
    let mut g = rng(seed);
    let shapes: Vec<Shape> = (0..count)
        .map(|k| Shape::Fourier {
            radius: g.gen_range(0.8..1.5),
            amp: g.gen_range(0.05..0.3),
            modes: 4,
            seed: seed.wrapping_mul(1000).wrapping_add(k as u64),
            dim: 2,
        })
        .collect();
    let rows: Vec<Result<([f64; 3], [f64; 3], f64)>> = Exec::Parallel.map(&shapes, |s| {
        let c = make_curve(s, n)?;
        let f = filament_integrals(&c);
        let fit = taylor_coefficients(&c, Exec::Sequential)?;
        let k = fit.coefficients;
        Ok(([f.f1, f.f3, f.f5], [k[0], k[2], k[4]], fit.fit_error[4]))
    });
    let rows: Vec<_> = rows.into_iter().collect::<Result<_>>()?;
    let mut t = Table::new("curves", &["F1", "F3", "F5", "c0", "c2", "c4", "c4 fit error"]);
    for (f, c, e) in &rows {
        t.row(f.iter().chain(c).chain([e]).map(|x| json!(x)).collect());
    }
    r.tables.push(t);
    let col = |i: usize| rows.iter().map(|(f, _, _)| vec![f[i]]).collect::<Vec<_>>();
    let target = |i: usize| rows.iter().map(|(_, c, _)| c[i]).collect::<Vec<_>>();
    let fits = [
        ("c0 ~ F1", regress(&col(0), &target(0))?),
        ("c2 ~ F3", regress(&col(1), &target(1))?),
        ("c4 ~ F5", regress(&col(2), &target(2))?),
        (
            "c4 ~ F1 + F3 + F5",
            regress(&rows.iter().map(|(f, _, _)| f.to_vec()).collect::<Vec<_>>(), &target(2))?,
        ),
    ];
    let mut ft = Table::new("regressions", &["fit", "coefficients", "standard errors", "R^2"]);
    for (name, fit) in &fits {
        for (k, (b, se)) in fit.coefficients.iter().zip(&fit.standard_errors).enumerate() {
            r.estimate(&format!("{name} b{k}"), *b, *se);
        }
        r.info(&format!("{name} R^2"), fit.r_squared);
        ft.row(vec![json!(name), json!(fit.coefficients), json!(fit.standard_errors), json!(fit.r_squared)]);
    }
    r.tables.push(ft);
    let c2_rel = rows.iter().map(|(f, c, _)| (c[1] + f[1] / 2.0).abs() / (f[1] / 2.0).abs()).fold(0.0, f64::max);
    r.info("largest |c2 + F3/2| / |F3/2|", c2_rel);
    r.info("largest c4 fit error", rows.iter().map(|x| x.2).fold(0.0, f64::max));
    Ok(r.finish())
}

/// Shape drift under combinations of the planar flows.
pub fn soliton(src: &CurveSource, n: usize, dt: f64, steps: usize) -> Result<CheckReport> {
    let mut r = CheckReport::new("probe-soliton", CheckKind::Probe);
    r.input("curve", src.describe());
    r.input("n", n);
    r.input("dt", dt);
    r.input("steps", steps);
    let combos: Vec<[f64; 4]> = if src.dim()? == 2 {
        vec![[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0], [-1.0, 0.0, 1.0, 0.0]]
    } else {
        vec![[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    };
    let mut t = Table::new("combinations", &["weights", "shape drift", "drift per time", "centroid shift"]);
    for w in combos {
        let fine = crate::flows::soliton_probe(&src.at(n)?, w, dt, steps)?;
        let rough = crate::flows::soliton_probe(&src.at((n / 2).max(16))?, w, dt, steps)?;
        r.estimate(&format!("drift per time {w:?}"), fine.drift_per_time, (fine.drift_per_time - rough.drift_per_time).abs());
        t.row(vec![json!(w), json!(fine.shape_drift), json!(fine.drift_per_time), json!(fine.centroid_shift)]);
    }
    r.tables.push(t);
    Ok(r.finish())
}

/// A circle of radius 1 traversed `turns` times with `n` samples per turn.
fn multi_circle(n: usize, turns: usize) -> Result<SampledCurve> {
    let m = n * turns;
    let pts = (0..m)
        .map(|j| {
            let t = TAU * turns as f64 * j as f64 / m as f64;
            Vec3::new(t.cos(), t.sin(), 0.0)
        })
        .collect();
    SampledCurve::new(2, pts)
}

fn identity_distance(c: &SampledCurve, lambda: f64) -> f64 {
    smooth::monodromy(c, lambda)
        .map(|m| m.map().projective_distance(&MoebiusMap::identity()))
        .unwrap_or(f64::INFINITY)
}

/// Scan bicycle lengths for identity monodromy on the unit circle, once and twice around.
pub fn circle_identity(n: usize, grid: Option<&[f64]>) -> Result<CheckReport> {
    let mut r = CheckReport::new("circle-identity", CheckKind::Probe);
    r.input("n_per_turn", n);
    let default: Vec<f64> = (0..240).map(|k| 1.0 + 3.0 * (k as f64 + 0.5) / 240.0).collect();
    let grid = grid.unwrap_or(&default);
    r.input("lambda_grid", json!({ "count": grid.len(), "min": grid.iter().cloned().fold(f64::INFINITY, f64::min), "max": grid.iter().cloned().fold(0.0, f64::max) }));
    let mut t = Table::new("minima", &["turns", "lambda", "distance to identity", "predicted lambda"]);
    for turns in [1usize, 2] {
        let c = multi_circle(n, turns)?;
        let d = Exec::Parallel.map(grid, |&l| identity_distance(&c, l));
        let k = (0..d.len()).fold(0, |b, k| if d[k] < d[b] { k } else { b });
        let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(grid.len() - 1)]);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let x1 = b - gr * (b - a);
            let x2 = a + gr * (b - a);
            if identity_distance(&c, x1) < identity_distance(&c, x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let best = 0.5 * (a + b);
        let dist = identity_distance(&c, best);
        // k turns: identity at lambda = 1 / sqrt(1 - (m/k)^2) for 0 < m < k.
        let predicted = if turns > 1 { json!(1.0 / (1.0 - 0.25f64).sqrt()) } else { json!(null) };
        t.row(vec![json!(turns), json!(best), json!(dist), predicted]);
        r.estimate(&format!("{turns}-turn minimal distance to identity"), dist, 0.0);
        r.estimate(&format!("{turns}-turn minimizing lambda"), best, (b - a).abs());
    }
    r.tables.push(t);
    Ok(r.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_integrals() {
        assert_eq!(Integral::parse("F3").unwrap(), Integral::Filament { index: 3 });
        assert_eq!(Integral::parse("c4").unwrap(), Integral::Spectrum { index: 4 });
        assert_eq!(Integral::parse("tr@0.5").unwrap(), Integral::Trace { lambda: 0.5 });
        assert!(Integral::parse("F9").is_err());
        assert!(Integral::parse("").is_err());
    }

    #[test]
    fn regression_recovers_a_line() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let fit = regress(&xs, &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }
}
