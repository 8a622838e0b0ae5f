//! Test-curve generators. Every shape is a finite trigonometric sum, sampled
//! at equal arc-length spacing.

use crate::curve::{SampledCurve, Vec3};
use crate::error::{BikeError, Result};
use crate::quadrature::gauss8;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, TAU};

/// One term `amp * cos(freq * theta + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    amp: f64,
    freq: f64,
    phase: f64,
}

/// Closed curve whose coordinates are trigonometric polynomials in
/// `theta in [0, 2 pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigCurve {
    dim: usize,
    coords: [Vec<Term>; 3],
}

impl TrigCurve {
    fn new(dim: usize) -> Self {
        Self { dim, coords: [vec![], vec![], vec![]] }
    }

    fn cos(mut self, axis: usize, amp: f64, freq: f64) -> Self {
        self.coords[axis].push(Term { amp, freq, phase: 0.0 });
        self
    }

    fn sin(mut self, axis: usize, amp: f64, freq: f64) -> Self {
        self.coords[axis].push(Term { amp, freq, phase: -FRAC_PI_2 });
        self
    }

    fn constant(self, axis: usize, c: f64) -> Self {
        self.cos(axis, c, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `order`-th derivative with respect to theta.
    pub fn eval(&self, theta: f64, order: u32) -> Vec3 {
        let mut out = Vec3::zeros();
        for (axis, terms) in self.coords.iter().enumerate() {
            out[axis] = terms
                .iter()
                .map(|t| {
                    if order > 0 && t.freq == 0.0 {
                        0.0
                    } else {
                        t.amp
                            * t.freq.powi(order as i32)
                            * (t.freq * theta + t.phase + order as f64 * FRAC_PI_2).cos()
                    }
                })
                .sum();
        }
        out
    }

    pub fn speed(&self, theta: f64) -> f64 {
        self.eval(theta, 1).norm()
    }

    /// Samples at equally spaced parameter values.
    pub fn sample_parameter(&self, n: usize) -> Result<SampledCurve> {
        let pts = (0..n).map(|j| self.eval(TAU * j as f64 / n as f64, 0)).collect();
        SampledCurve::new(self.dim, pts)
    }

    /// Parameter values at which arc length reaches `j L / n`.
    pub fn arclength_parameters(&self, n: usize) -> Vec<f64> {
        let panels = (4 * n).max(256);
        let h = TAU / panels as f64;
        let mut cum = Vec::with_capacity(panels + 1);
        cum.push(0.0);
        for k in 0..panels {
            let a = h * k as f64;
            let s = cum[k] + gauss8(|t| self.speed(t), a, a + h);
            cum.push(s);
        }
        let total = cum[panels];
        (0..n)
            .map(|j| {
                let target = total * j as f64 / n as f64;
                let k = match cum.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
                    Ok(k) => k.min(panels - 1),
                    Err(k) => k.saturating_sub(1).min(panels - 1),
                };
                let a = h * k as f64;
                let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
                let mut theta = a + h * frac;
                for _ in 0..50 {
                    let s = cum[k] + gauss8(|t| self.speed(t), a, theta);
                    let step = (s - target) / self.speed(theta);
                    theta -= step;
                    if step.abs() < 1e-15 * (1.0 + theta.abs()) {
                        break;
                    }
                }
                theta
            })
            .collect()
    }

    /// Samples at equal arc-length spacing, starting at `theta = 0`.
    pub fn sample_arclength(&self, n: usize) -> Result<SampledCurve> {
        let pts = self.arclength_parameters(n).into_iter().map(|t| self.eval(t, 0)).collect();
        SampledCurve::new(self.dim, pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { radius: f64, center: [f64; 2] },
    Ellipse { a: f64, b: f64 },
    TorusKnot { p: u32, q: u32, major: f64, minor: f64 },
    /// Circle of radius `radius` plus a seeded random perturbation with
    /// `modes` Fourier modes (wavenumbers 2..=modes+1) of relative size `amp`.
    Fourier { radius: f64, amp: f64, modes: u32, seed: u64, dim: usize },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(BikeError::BadParams(format!("{name} must be positive, got {v}")))
    }
}

impl Shape {
    pub fn circle(radius: f64) -> Self {
        Shape::Circle { radius, center: [0.0, 0.0] }
    }

    pub fn fourier(seed: u64, amp: f64) -> Self {
        Shape::Fourier { radius: 1.0, amp, modes: 4, seed, dim: 2 }
    }

    pub fn trig(&self) -> Result<TrigCurve> {
        match *self {
            Shape::Circle { radius, center } => {
                positive("radius", radius)?;
                Ok(TrigCurve::new(2)
                    .cos(0, radius, 1.0)
                    .constant(0, center[0])
                    .sin(1, radius, 1.0)
                    .constant(1, center[1]))
            }
            Shape::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)?;
                Ok(TrigCurve::new(2).cos(0, a, 1.0).sin(1, b, 1.0))
            }
            Shape::TorusKnot { p, q, major, minor } => {
                positive("major", major)?;
                positive("minor", minor)?;
                if p == 0 || q == 0 || minor >= major {
                    return Err(BikeError::BadParams(
                        "torus knot needs p, q >= 1 and minor < major".into(),
                    ));
                }
                let (p, q) = (p as f64, q as f64);
                // (R + r cos q t)(cos p t, sin p t) + r sin q t e_z
                Ok(TrigCurve::new(3)
                    .cos(0, major, p)
                    .cos(0, minor / 2.0, p + q)
                    .cos(0, minor / 2.0, p - q)
                    .sin(1, major, p)
                    .sin(1, minor / 2.0, p + q)
                    .sin(1, minor / 2.0, p - q)
                    .sin(2, minor, q))
            }
            Shape::Fourier { radius, amp, modes, seed, dim } => {
                positive("radius", radius)?;
                if !(0.0..0.5).contains(&amp) {
                    return Err(BikeError::BadParams(format!("amp must lie in [0, 0.5), got {amp}")));
                }
                if dim != 2 && dim != 3 {
                    return Err(BikeError::BadParams(format!("dim must be 2 or 3, got {dim}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut c = TrigCurve::new(dim).cos(0, radius, 1.0).sin(1, radius, 1.0);
                for k in 2..modes + 2 {
                    let kf = k as f64;
                    for axis in 0..dim {
                        let ac: f64 = rng.gen_range(-1.0..1.0);
                        let as_: f64 = rng.gen_range(-1.0..1.0);
                        let s = radius * amp / (kf * kf);
                        c = c.cos(axis, s * ac, kf).sin(axis, s * as_, kf);
                    }
                }
                Ok(c)
            }
        }
    }
}

/// Arc-length sampled curve of the given shape.
pub fn make_curve(shape: &Shape, n: usize) -> Result<SampledCurve> {
    if n < crate::curve::MIN_SAMPLES {
        return Err(BikeError::TooFewSamples { got: n, need: crate::curve::MIN_SAMPLES });
    }
    shape.trig()?.sample_arclength(n)
}
