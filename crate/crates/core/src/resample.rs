//! Periodic cubic spline through curve samples and equal arc-length resampling.

use crate::curve::{SampledCurve, Vec3};
use crate::error::{BikeError, Result};
use crate::quadrature::gauss8;

/// Solve a cyclic tridiagonal system `a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = r[i]`.
fn solve_cyclic(a: &[f64], b: &[f64], c: &[f64], r: &[Vec3]) -> Vec<Vec3> {
    let n = b.len();
    // Sherman-Morrison on the corner entries.
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= a[0] * c[n - 1] / gamma;
    let thomas = |rhs: &[Vec3]| -> Vec<Vec3> {
        let mut cp = vec![0.0; n];
        let mut dp = vec![Vec3::zeros(); n];
        cp[0] = c[0] / bb[0];
        dp[0] = rhs[0] / bb[0];
        for i in 1..n {
            let m = bb[i] - a[i] * cp[i - 1];
            cp[i] = c[i] / m;
            dp[i] = (rhs[i] - dp[i - 1] * a[i]) / m;
        }
        let mut x = vec![Vec3::zeros(); n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - x[i + 1] * cp[i];
        }
        x
    };
    let x = thomas(r);
    let mut u = vec![Vec3::zeros(); n];
    u[0] = Vec3::repeat(gamma);
    u[n - 1] = Vec3::repeat(c[n - 1]);
    let z = thomas(&u);
    // v = (1, 0, ..., 0, a[0] / gamma)
    let fact_num = x[0] + x[n - 1] * (a[0] / gamma);
    let fact_den = z[0] + z[n - 1] * (a[0] / gamma) + Vec3::repeat(1.0);
    (0..n)
        .map(|i| x[i] - z[i].component_mul(&fact_num.component_div(&fact_den)))
        .collect()
}

/// Periodic cubic spline interpolating closed-curve samples, parameterized by
/// cumulative chord length.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    knots: Vec<f64>,
    values: Vec<Vec3>,
    second: Vec<Vec3>,
}

impl PeriodicSpline {
    pub fn through(c: &SampledCurve) -> Self {
        let pts = c.points();
        let n = pts.len();
        let h: Vec<f64> = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).collect();
        let mut knots = vec![0.0; n + 1];
        for i in 0..n {
            knots[i + 1] = knots[i] + h[i];
        }
        let a: Vec<f64> = (0..n).map(|i| h[(i + n - 1) % n]).collect();
        let b: Vec<f64> = (0..n).map(|i| 2.0 * (h[(i + n - 1) % n] + h[i])).collect();
        let cc: Vec<f64> = h.clone();
        let r: Vec<Vec3> = (0..n)
            .map(|i| {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                ((pts[ip] - pts[i]) / h[i] - (pts[i] - pts[im]) / h[im]) * 6.0
            })
            .collect();
        let second = solve_cyclic(&a, &b, &cc, &r);
        Self { knots, values: pts.to_vec(), second }
    }

    pub fn period(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let p = self.period();
        let t = t.rem_euclid(p);
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
        .min(self.values.len() - 1);
        (i, t - self.knots[i])
    }

    fn seg_eval(&self, i: usize, u: f64) -> (Vec3, Vec3) {
        let n = self.values.len();
        let j = (i + 1) % n;
        let h = self.knots[i + 1] - self.knots[i];
        let (mi, mj) = (self.second[i], self.second[j]);
        let (yi, yj) = (self.values[i], self.values[j]);
        let w = h - u;
        let ci = yi / h - mi * (h / 6.0);
        let cj = yj / h - mj * (h / 6.0);
        let pos = mi * (w * w * w / (6.0 * h)) + mj * (u * u * u / (6.0 * h)) + ci * w + cj * u;
        let der = mj * (u * u / (2.0 * h)) - mi * (w * w / (2.0 * h)) - ci + cj;
        (pos, der)
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let (i, u) = self.segment(t);
        self.seg_eval(i, u).0
    }

    pub fn tangent(&self, t: f64) -> Vec3 {
        let (i, u) = self.segment(t);
        self.seg_eval(i, u).1
    }

    fn segment_lengths(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| {
                let h = self.knots[i + 1] - self.knots[i];
                gauss8(|u| self.seg_eval(i, u).1.norm(), 0.0, 0.5 * h)
                    + gauss8(|u| self.seg_eval(i, u).1.norm(), 0.5 * h, h)
            })
            .collect()
    }

    /// Arc length of the spline.
    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }
}

/// Resample a closed curve to `m` points equally spaced in arc length of its
/// periodic cubic interpolant, starting at sample 0.
pub fn resample_arclength(c: &SampledCurve, m: usize) -> Result<SampledCurve> {
    if m < crate::curve::MIN_SAMPLES {
        return Err(BikeError::TooFewSamples { got: m, need: crate::curve::MIN_SAMPLES });
    }
    let spline = PeriodicSpline::through(c);
    let seg = spline.segment_lengths();
    let mut cum = vec![0.0; seg.len() + 1];
    for i in 0..seg.len() {
        cum[i + 1] = cum[i] + seg[i];
    }
    let total = cum[seg.len()];
    if total < 1e-12 {
        return Err(BikeError::DegenerateCurve(format!("length {total:e}")));
    }
    let pts = (0..m)
        .map(|j| {
            let target = total * j as f64 / m as f64;
            let i = match cum.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
                Ok(i) => i,
                Err(i) => i - 1,
            }
            .min(seg.len() - 1);
            let h = spline.knots[i + 1] - spline.knots[i];
            let mut u = h * (target - cum[i]) / seg[i].max(f64::MIN_POSITIVE);
            for _ in 0..50 {
                let s = cum[i] + gauss8(|x| spline.seg_eval(i, x).1.norm(), 0.0, u);
                let step = (s - target) / spline.seg_eval(i, u).1.norm();
                u -= step;
                if step.abs() < 1e-15 * h.max(1.0) {
                    break;
                }
            }
            spline.seg_eval(i, u).0
        })
        .collect();
    SampledCurve::new(c.dim(), pts)
}
