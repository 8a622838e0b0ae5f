//! Hierarchy vector fields and curve evolution.
//!
//! The fields `X0 = -T`, `X1 = kappa B`, `X2`, `X3` are available from Frenet
//! data and in a frame-free form built from `T` and its arc-length
//! derivatives, which needs no normal and is used inside time stepping:
//!
//! * `X1 = T x T_s`
//! * `X2 = T_ss + (3/2) kappa^2 T`
//! * `X3 = -T x T_sss - T_s x T_ss + 2 (T . (T_s x T_ss)) T - (kappa^2 / 2) T x T_s`

use crate::curve::{SampledCurve, Vec3, VectorField};
use crate::error::{BikeError, Result};
use crate::frame::frenet_data;
use crate::invariants::{area_centroid, filament_integrals, FilamentIntegrals};
use crate::resample::resample_arclength;
use crate::stencil;
use serde::{Deserialize, Serialize};

/// Which vector field drives the evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    /// `X1 = kappa B`.
    Filament,
    /// `X2`, which for planar curves is `(kappa^2 / 2) T + kappa' N`.
    PlanarFilament,
    Hierarchy { n: usize },
    /// `sum w[n] X_n`.
    Combination { weights: [f64; 4] },
}

impl Field {
    pub fn weights(&self) -> Result<[f64; 4]> {
        let w = match self {
            Field::Filament => [0.0, 1.0, 0.0, 0.0],
            Field::PlanarFilament => [0.0, 0.0, 1.0, 0.0],
            Field::Hierarchy { n } if *n <= 3 => {
                let mut w = [0.0; 4];
                w[*n] = 1.0;
                w
            }
            Field::Hierarchy { n } => return Err(BikeError::BadParams(format!("hierarchy index {n} > 3"))),
            Field::Combination { weights } => *weights,
        };
        if w.iter().all(|x| x.is_finite()) {
            Ok(w)
        } else {
            Err(BikeError::BadParams("field weights must be finite".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSpec {
    pub field: Field,
    pub dt: f64,
    pub steps: usize,
    /// Resample to equal arc length every this many steps; 0 disables.
    #[serde(default)]
    pub cadence: usize,
}

impl FlowSpec {
    pub fn new(field: Field, dt: f64, steps: usize) -> Self {
        Self { field, dt, steps, cadence: 0 }
    }

    fn validate(&self, dim: usize) -> Result<[f64; 4]> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(BikeError::BadParams(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(BikeError::BadParams("steps must be at least 1".into()));
        }
        let w = self.field.weights()?;
        if dim == 2 && (w[1] != 0.0 || w[3] != 0.0) {
            return Err(BikeError::DimensionMismatch("X1 and X3 leave the plane; embed the curve in 3D".into()));
        }
        Ok(w)
    }
}

fn check_index(dim: usize, n: usize) -> Result<()> {
    if n > 3 {
        return Err(BikeError::BadParams(format!("hierarchy index {n} > 3")));
    }
    if dim == 2 && n % 2 == 1 {
        return Err(BikeError::DimensionMismatch(format!("X{n} is not tangent to the plane")));
    }
    Ok(())
}

/// `T` and its first three arc-length derivatives.
struct Jets {
    t: Vec<Vec3>,
    ts: Vec<Vec3>,
    tss: Vec<Vec3>,
    tsss: Option<Vec<Vec3>>,
}

fn jets(points: &[Vec3], third: bool) -> Jets {
    let v = stencil::derivative(points);
    let inv: Vec<f64> = v.iter().map(|w| 1.0 / w.norm()).collect();
    let ds = |xs: &[Vec3]| -> Vec<Vec3> { stencil::derivative(xs).iter().zip(&inv).map(|(d, k)| d * *k).collect() };
    let t: Vec<Vec3> = v.iter().zip(&inv).map(|(w, k)| w * *k).collect();
    let ts = ds(&t);
    let tss = ds(&ts);
    let tsss = third.then(|| ds(&tss));
    Jets { t, ts, tss, tsss }
}

/// `sum w[n] X_n` at every sample, frame-free.
fn combined_field(points: &[Vec3], w: &[f64; 4]) -> Vec<Vec3> {
    let j = jets(points, w[3] != 0.0);
    (0..points.len())
        .map(|i| {
            let (t, ts, tss) = (j.t[i], j.ts[i], j.tss[i]);
            let k2 = ts.norm_squared();
            let mut x = Vec3::zeros();
            if w[0] != 0.0 {
                x -= t * w[0];
            }
            if w[1] != 0.0 {
                x += t.cross(&ts) * w[1];
            }
            if w[2] != 0.0 {
                x += (tss + t * (1.5 * k2)) * w[2];
            }
            if let Some(tsss) = &j.tsss {
                let c = ts.cross(&tss);
                let x3 = -t.cross(&tsss[i]) - c + t * (2.0 * t.dot(&c)) - t.cross(&ts) * (k2 / 2.0);
                x += x3 * w[3];
            }
            x
        })
        .collect()
}

/// Velocity of `field` at every sample of `c`.
pub fn flow_velocity(c: &SampledCurve, field: &Field) -> Result<VectorField> {
    let w = FlowSpec::new(field.clone(), 1.0, 1).validate(c.dim())?;
    VectorField::new(c, combined_field(c.points(), &w))
}

/// Frame-free `X_n`.
pub fn hierarchy_field_free(c: &SampledCurve, n: usize) -> Result<VectorField> {
    check_index(c.dim(), n)?;
    let mut w = [0.0; 4];
    w[n] = 1.0;
    VectorField::new(c, combined_field(c.points(), &w))
}

#[derive(Debug, Clone)]
pub struct FieldEval {
    pub field: VectorField,
    /// Samples where the normal is undefined and the frame-free value was used.
    pub flagged: Vec<usize>,
}

/// `X_n` from Frenet data, falling back to the frame-free value where the
/// curvature vanishes.
pub fn hierarchy_field(c: &SampledCurve, n: usize) -> Result<FieldEval> {
    check_index(c.dim(), n)?;
    let f = frenet_data(c);
    let free = if f.any_flagged() { Some(hierarchy_field_free(c, n)?) } else { None };
    let mut flagged = Vec::new();
    let vecs = (0..c.len())
        .map(|j| {
            if f.flagged[j] {
                flagged.push(j);
                return free.as_ref().map(|x| x.vectors()[j]).unwrap_or_default();
            }
            let (k, t, dk, dt) = (f.kappa[j], f.tau[j], f.dkappa[j], f.dtau[j]);
            let (tt, nn, bb) = (f.t[j], f.n[j], f.b[j]);
            match n {
                0 => -tt,
                1 => bb * k,
                2 => tt * (k * k / 2.0) + nn * dk + bb * (k * t),
                _ => {
                    tt * (k * k * t)
                        + nn * (2.0 * dk * t + k * dt)
                        + bb * (k * t * t - f.d2kappa[j] - k * k * k / 2.0)
                }
            }
        })
        .collect();
    Ok(FieldEval { field: VectorField::new(c, vecs)?, flagged })
}

/// Sup norm of `T x X_n - (X_{n-1})'` with the Frenet fields.
pub fn recursion_check(c: &SampledCurve, n: usize) -> Result<f64> {
    if c.dim() != 3 {
        return Err(BikeError::DimensionMismatch("the recursion uses the cross product".into()));
    }
    if !(1..=3).contains(&n) {
        return Err(BikeError::BadParams(format!("recursion index must be 1..=3, got {n}")));
    }
    let f = frenet_data(c);
    let xn = hierarchy_field(c, n)?.field;
    let xp = hierarchy_field(c, n - 1)?.field;
    let dxp = f.ds(xp.vectors());
    Ok((0..c.len()).map(|j| (f.t[j].cross(&xn.vectors()[j]) - dxp[j]).norm()).fold(0.0, f64::max))
}

/// Largest stable RK4 step for the combined field on this curve.
pub fn stable_step(c: &SampledCurve, w: &[f64; 4]) -> f64 {
    let h = c.speeds().into_iter().fold(f64::INFINITY, f64::min);
    let k = stencil::symbol_radius() / h;
    let rate: f64 = w.iter().enumerate().map(|(n, x)| x.abs() * k.powi(n as i32 + 1)).sum();
    if rate == 0.0 {
        f64::INFINITY
    } else {
        0.7 * 2.83 / rate
    }
}

/// One row of the conservation log.
#[derive(Debug, Clone, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub integrals: FilamentIntegrals,
    /// Upper-triangular entries of the area bivector, row by row.
    pub area: Vec<f64>,
    pub j: Vec<f64>,
}

impl LogRow {
    fn of(step: usize, t: f64, c: &SampledCurve) -> Self {
        let ac = area_centroid(c);
        let d = c.dim();
        let area = (0..d).flat_map(|r| ((r + 1)..d).map(move |s| (r, s))).map(|(r, s)| ac.a[r][s]).collect();
        Self { step, t, integrals: filament_integrals(c), area, j: ac.j }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub curve: SampledCurve,
    /// Rows for step 0 and after every step.
    pub log: Vec<LogRow>,
    /// RK4 substeps taken per step.
    pub substeps: usize,
}

pub const BLOWUP_NORM: f64 = 1e6;
pub const BLOWUP_KAPPA: f64 = 1e4;

fn rk4_step(points: &[Vec3], w: &[f64; 4], dt: f64) -> Vec<Vec3> {
    let shifted = |base: &[Vec3], k: &[Vec3], h: f64| -> Vec<Vec3> { base.iter().zip(k).map(|(p, v)| p + v * h).collect() };
    let k1 = combined_field(points, w);
    let k2 = combined_field(&shifted(points, &k1, dt / 2.0), w);
    let k3 = combined_field(&shifted(points, &k2, dt / 2.0), w);
    let k4 = combined_field(&shifted(points, &k3, dt), w);
    (0..points.len()).map(|i| points[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0)).collect()
}

fn blowup(step: usize, points: &[Vec3]) -> Option<BikeError> {
    if points.iter().any(|p| !(p.norm() <= BLOWUP_NORM)) {
        return Some(BikeError::BlowUp { step, reason: format!("a point left the ball of radius {BLOWUP_NORM}") });
    }
    let j = jets(points, false);
    if j.ts.iter().any(|k| !(k.norm() <= BLOWUP_KAPPA)) {
        return Some(BikeError::BlowUp { step, reason: format!("curvature exceeded {BLOWUP_KAPPA}") });
    }
    None
}

pub fn evolve(c: &SampledCurve, spec: &FlowSpec) -> Result<Evolution> {
    evolve_with(c, spec, true)
}

/// As [`evolve`]; with `log` unset only the first and last rows are kept.
pub fn evolve_with(c: &SampledCurve, spec: &FlowSpec, log: bool) -> Result<Evolution> {
    let w = spec.validate(c.dim())?;
    let substeps = (spec.dt / stable_step(c, &w)).ceil().max(1.0) as usize;
    let h = spec.dt / substeps as f64;
    let mut rows = vec![LogRow::of(0, 0.0, c)];
    let mut cur = c.clone();
    for step in 1..=spec.steps {
        let mut pts = cur.points().to_vec();
        for _ in 0..substeps {
            pts = rk4_step(&pts, &w, h);
        }
        if let Some(e) = blowup(step, &pts) {
            return Err(e);
        }
        cur = SampledCurve::new(c.dim(), pts).map_err(|e| BikeError::BlowUp { step, reason: e.to_string() })?;
        if spec.cadence > 0 && step % spec.cadence == 0 {
            cur = resample_arclength(&cur, c.len())?;
        }
        if log || step == spec.steps {
            rows.push(LogRow::of(step, step as f64 * spec.dt, &cur));
        }
    }
    Ok(Evolution { curve: cur, log: rows, substeps })
}

/// Largest relative change of each of `F1..F5` over the log, relative to
/// `max(|F_k(0)|, floor)`.
pub fn integral_drift(log: &[LogRow], floor: f64) -> [f64; 5] {
    let f0 = log[0].integrals.as_array();
    let mut out = [0.0; 5];
    for row in log {
        let f = row.integrals.as_array();
        for k in 0..5 {
            out[k] = f64::max(out[k], (f[k] - f0[k]).abs() / f0[k].abs().max(floor));
        }
    }
    out
}

/// Shape difference between two curves modulo rigid motion and starting
/// point: sup distance between curvature (and torsion) profiles over the
/// samples of `a`, minimized over a continuous shift of the start of `b`.
/// `b` is brought to the sample count of `a` and to equal arc length first
/// when needed.
pub fn shape_distance(a: &SampledCurve, b: &SampledCurve) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(BikeError::DimensionMismatch("curves differ in dimension".into()));
    }
    let uniform = |c: &SampledCurve| {
        let s = c.speeds();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().all(|x| (x - mean).abs() < 1e-8 * mean)
    };
    let b = if b.len() != a.len() || !uniform(b) { resample_arclength(b, a.len())? } else { b.clone() };
    let a = if uniform(a) { a.clone() } else { resample_arclength(a, a.len())? };
    let profile = |c: &SampledCurve| -> Vec<[f64; 2]> {
        let f = frenet_data(c);
        (0..c.len()).map(|j| [f.kappa[j], f.tau[j]]).collect()
    };
    let (pa, pb) = (profile(&a), profile(&b));
    let n = pa.len();
    let kb: Vec<f64> = pb.iter().map(|p| p[0]).collect();
    let tb: Vec<f64> = pb.iter().map(|p| p[1]).collect();
    let at_shift = |s: f64| -> f64 {
        (0..n)
            .map(|j| {
                let x = j as f64 + s;
                let k = stencil::sample_at(&kb, x);
                let t = stencil::sample_at(&tb, x);
                (pa[j][0] - k).abs().max((pa[j][1] - t).abs())
            })
            .fold(0.0, f64::max)
    };
    let best = (0..n)
        .map(|s| {
            let d = (0..n)
                .map(|j| {
                    let q = pb[(j + s) % n];
                    (pa[j][0] - q[0]).abs().max((pa[j][1] - q[1]).abs())
                })
                .fold(0.0, f64::max);
            (s, d)
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(s, _)| s as f64)
        .unwrap_or(0.0);
    let (mut lo, mut hi) = (best - 1.0, best + 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (at_shift(x1), at_shift(x2));
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = at_shift(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = at_shift(x2);
        }
    }
    Ok(f1.min(f2).min(at_shift(best)))
}

/// Stationarity probe for a candidate soliton: shape drift per unit time
/// under a combination of hierarchy fields.
#[derive(Debug, Clone, Serialize)]
pub struct SolitonProbe {
    pub weights: [f64; 4],
    pub t: f64,
    pub shape_drift: f64,
    pub drift_per_time: f64,
    /// Displacement of the centroid, a rigid-motion indicator.
    pub centroid_shift: f64,
}

pub fn soliton_probe(c: &SampledCurve, weights: [f64; 4], dt: f64, steps: usize) -> Result<SolitonProbe> {
    let spec = FlowSpec::new(Field::Combination { weights }, dt, steps);
    let out = evolve_with(c, &spec, false)?;
    let t = dt * steps as f64;
    let shape_drift = shape_distance(c, &out.curve)?;
    Ok(SolitonProbe {
        weights,
        t,
        shape_drift,
        drift_per_time: shape_drift / t,
        centroid_shift: (out.curve.centroid() - c.centroid()).norm(),
    })
}
