//! Moebius maps of the circle and sphere of directions in stereographic charts.
//!
//! A map is a unimodular 2x2 complex matrix `[[a, b], [c, d]]` acting by
//! `z -> (a z + b) / (c z + d)`; planar monodromies have real entries. A
//! [`Chart`] fixes the stereographic projection between unit directions and
//! the extended complex line.

use crate::curve::Vec3;
use crate::error::{BikeError, Result};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

/// A point of the extended complex line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjPoint {
    Finite(Complex64),
    Infinity,
}

impl ProjPoint {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            ProjPoint::Finite(z) => Some(z),
            ProjPoint::Infinity => None,
        }
    }
}

impl Serialize for ProjPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ProjPoint::Finite(z) => [z.re, z.im].serialize(s),
            ProjPoint::Infinity => "infinity".serialize(s),
        }
    }
}

/// Stereographic projection from `pole`, with `(u1, u2)` spanning the
/// equatorial plane. Planar charts use `u2 = e_z`, so directions in the
/// xy-plane project onto the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chart {
    #[serde(serialize_with = "ser_vec")]
    pub pole: Vec3,
    #[serde(serialize_with = "ser_vec")]
    pub u1: Vec3,
    #[serde(serialize_with = "ser_vec")]
    pub u2: Vec3,
    pub planar: bool,
}

pub(crate) fn ser_vec<S: serde::Serializer>(v: &Vec3, s: S) -> std::result::Result<S::Ok, S::Error> {
    [v.x, v.y, v.z].serialize(s)
}

impl Chart {
    pub fn planar(pole: Vec3) -> Self {
        let p = Vec3::new(pole.x, pole.y, 0.0).normalize();
        Self { pole: p, u1: Vec3::new(-p.y, p.x, 0.0), u2: Vec3::z(), planar: true }
    }

    pub fn spatial(pole: Vec3) -> Self {
        let p = pole.normalize();
        let seed = if p.x.abs() < 0.6 { Vec3::x() } else { Vec3::y() };
        let u1 = (seed - p * p.dot(&seed)).normalize();
        let u2 = p.cross(&u1);
        Self { pole: p, u1, u2, planar: false }
    }

    pub fn for_dim(dim: usize, pole: Vec3) -> Self {
        if dim == 2 {
            Self::planar(pole)
        } else {
            Self::spatial(pole)
        }
    }

    pub fn project(&self, e: &Vec3) -> ProjPoint {
        let den = 1.0 - e.dot(&self.pole);
        if den.abs() < 1e-300 {
            return ProjPoint::Infinity;
        }
        ProjPoint::Finite(Complex64::new(e.dot(&self.u1) / den, e.dot(&self.u2) / den))
    }

    pub fn unproject(&self, z: ProjPoint) -> Vec3 {
        match z {
            ProjPoint::Infinity => self.pole,
            ProjPoint::Finite(z) => {
                let r2 = z.norm_sqr();
                if !r2.is_finite() {
                    return self.pole;
                }
                (self.u1 * (2.0 * z.re) + self.u2 * (2.0 * z.im) + self.pole * (r2 - 1.0)) / (r2 + 1.0)
            }
        }
    }
}

/// Candidate pole farthest (in angle) from every given direction.
pub fn choose_pole(dim: usize, dirs: &[Vec3]) -> Vec3 {
    let candidates: Vec<Vec3> = if dim == 2 {
        (0..720)
            .map(|k| {
                let a = TAU * (k as f64 + 0.5) / 720.0;
                Vec3::new(a.cos(), a.sin(), 0.0)
            })
            .collect()
    } else {
        let m = 2000;
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..m)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                Vec3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect()
    };
    let mut best = candidates[0];
    let mut best_d = f64::NEG_INFINITY;
    for c in candidates {
        let d = dirs.iter().map(|e| angle(e, &c)).fold(f64::INFINITY, f64::min);
        if d > best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Angle between two unit vectors, accurate for small angles.
pub fn angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusMap {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Serialize for MoebiusMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let row = |z: &Complex64| [z.re, z.im];
        [[row(&self.a), row(&self.b)], [row(&self.c), row(&self.d)]].serialize(s)
    }
}

impl MoebiusMap {
    pub fn identity() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Self { a: o, b: z, c: z, d: o }
    }

    /// Normalized to determinant one.
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        let det = a * d - b * c;
        if det.norm() < 1e-300 || !det.is_finite() {
            return Err(BikeError::FitDegenerate("singular matrix".into()));
        }
        let k = det.sqrt().inv();
        Ok(Self { a: a * k, b: b * k, c: c * k, d: d * k })
    }

    /// Entries already known to have determinant one. Strongly hyperbolic
    /// products cannot be renormalized from `ad - bc`, which cancels.
    pub fn unimodular(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let r = |x: f64| Complex64::new(x, 0.0);
        Self::new(r(a), r(b), r(c), r(d))
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> Complex64 {
        self.a + self.d
    }

    /// Conjugacy invariant `tr^2 / det`; maps are kept at unit determinant.
    pub fn tr2_over_det(&self) -> Complex64 {
        let t = self.trace();
        t * t
    }

    pub fn is_real(&self, tol: f64) -> bool {
        [self.a, self.b, self.c, self.d].iter().all(|z| z.im.abs() <= tol * (1.0 + z.re.abs()))
    }

    /// Drop a common complex phase so that a map with real ratios gets real entries.
    pub fn realified(&self) -> Self {
        let big = [self.a, self.b, self.c, self.d]
            .into_iter()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap();
        let ph = big.conj() / big.norm();
        let m = [self.a, self.b, self.c, self.d].map(|z| z * ph);
        let scale = big.norm();
        // A phase of +-i would turn the determinant into -1.
        if (ph * ph).re > 0.0 && m.iter().all(|z| z.im.abs() <= 1e-12 * scale) {
            let r = |z: Complex64| Complex64::new(z.re, 0.0);
            Self { a: r(m[0]), b: r(m[1]), c: r(m[2]), d: r(m[3]) }
        } else {
            *self
        }
    }

    pub fn apply(&self, z: ProjPoint) -> ProjPoint {
        match z {
            ProjPoint::Infinity => {
                if self.c.norm() == 0.0 {
                    ProjPoint::Infinity
                } else {
                    ProjPoint::Finite(self.a / self.c)
                }
            }
            ProjPoint::Finite(z) => {
                let den = self.c * z + self.d;
                if den.norm() < 1e-300 {
                    ProjPoint::Infinity
                } else {
                    ProjPoint::Finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Self {
        Self { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::identity(), |acc, _| self.compose(&acc))
    }

    /// Distance between normalized maps modulo the sign ambiguity.
    pub fn projective_distance(&self, other: &Self) -> f64 {
        let d = |s: f64| {
            [self.a - other.a * s, self.b - other.b * s, self.c - other.c * s, self.d - other.d * s]
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        };
        d(1.0).min(d(-1.0))
    }

    /// The map sending `z1, z2, z3` to `0, 1, infinity`.
    fn to_standard(z1: ProjPoint, z2: ProjPoint, z3: ProjPoint) -> Result<Self> {
        use ProjPoint::*;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let (a, b, c, d) = match (z1, z2, z3) {
            (Infinity, Finite(z2), Finite(z3)) => (zero, -(z2 - z3), -one, z3),
            (Finite(z1), Infinity, Finite(z3)) => (one, -z1, one, -z3),
            (Finite(z1), Finite(z2), Infinity) => (-one, z1, zero, -(z2 - z1)),
            (Finite(z1), Finite(z2), Finite(z3)) => (z2 - z3, -z1 * (z2 - z3), z2 - z1, -z3 * (z2 - z1)),
            _ => return Err(BikeError::FitDegenerate("two points at infinity".into())),
        };
        Self::new(a, b, c, d)
    }

    /// Unique map sending each `from[k]` to `to[k]`.
    pub fn through_three(from: [ProjPoint; 3], to: [ProjPoint; 3]) -> Result<Self> {
        let s = Self::to_standard(from[0], from[1], from[2])?;
        let t = Self::to_standard(to[0], to[1], to[2])?;
        let m = t.inverse().compose(&s);
        Self::new(m.a, m.b, m.c, m.d)
    }

    /// Express a map given in chart `from` in chart `to`.
    pub fn rechart(&self, from: &Chart, to: &Chart) -> Result<Self> {
        let probes = [Vec3::x(), Vec3::y(), Vec3::new(-1.0, -1.0, 0.0).normalize()];
        let probes: Vec<Vec3> = if from.planar {
            probes.to_vec()
        } else {
            vec![Vec3::x(), Vec3::y(), Vec3::z()]
        };
        let src = [from.project(&probes[0]), from.project(&probes[1]), from.project(&probes[2])];
        let dst = [to.project(&probes[0]), to.project(&probes[1]), to.project(&probes[2])];
        let t = Self::through_three(src, dst)?;
        let m = t.compose(self).compose(&t.inverse());
        Ok(if to.planar { m.realified() } else { m })
    }

    /// Fixed points with their multipliers (derivative of the map there),
    /// ordered attracting first.
    pub fn fixed_points(&self) -> Vec<FixedPoint> {
        let tr = self.trace();
        let disc = (tr * tr - 4.0).sqrt();
        // The larger root directly, the smaller one from det = 1.
        let big = if (tr + disc).norm() >= (tr - disc).norm() { (tr + disc) / 2.0 } else { (tr - disc) / 2.0 };
        let mut mus = vec![big, big.inv()];
        if disc.norm() < 1e-12 * (1.0 + tr.norm()) {
            mus.truncate(1);
        }
        let scale = [self.a, self.b, self.c, self.d].iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut out: Vec<FixedPoint> = mus
            .into_iter()
            .map(|mu| {
                // Eigenvector from whichever row is better conditioned.
                let (num1, den1) = (mu - self.d, self.c);
                let (num2, den2) = (self.b, mu - self.a);
                let point = if den1.norm().max(den2.norm()) <= 1e-300 * scale.max(1.0) {
                    ProjPoint::Infinity
                } else if den1.norm() >= den2.norm() {
                    ProjPoint::Finite(num1 / den1)
                } else if den2.norm() <= 1e-14 * scale {
                    ProjPoint::Infinity
                } else {
                    ProjPoint::Finite(num2 / den2)
                };
                FixedPoint { point, multiplier: (mu * mu).inv(), direction: None }
            })
            .collect();
        out.sort_by(|x, y| x.multiplier.norm().total_cmp(&y.multiplier.norm()));
        out
    }

    pub fn classify(&self) -> Classification {
        classify(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub point: ProjPoint,
    #[serde(serialize_with = "ser_c")]
    pub multiplier: Complex64,
    /// The fixed point as a unit direction, when a chart is known.
    #[serde(serialize_with = "ser_opt_vec")]
    pub direction: Option<Vec3>,
}

fn ser_c<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn ser_opt_vec<S: serde::Serializer>(v: &Option<Vec3>, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.map(|v| [v.x, v.y, v.z]).serialize(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonodromyClass {
    Identity,
    Elliptic,
    Parabolic,
    /// Two fixed points with multipliers off the unit circle (loxodromic
    /// maps of the sphere included).
    Hyperbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub class: MonodromyClass,
    #[serde(serialize_with = "ser_c")]
    pub tr2_over_det: Complex64,
    pub fixed_points: Vec<FixedPoint>,
}

impl Classification {
    pub fn with_chart(mut self, chart: &Chart) -> Self {
        for f in &mut self.fixed_points {
            f.direction = Some(chart.unproject(f.point));
        }
        self
    }
}

pub const IDENTITY_TOL: f64 = 1e-8;
const PARABOLIC_TOL: f64 = 1e-10;

pub fn classify(m: &MoebiusMap) -> Classification {
    let tr2 = m.tr2_over_det();
    if m.projective_distance(&MoebiusMap::identity()) < IDENTITY_TOL {
        return Classification { class: MonodromyClass::Identity, tr2_over_det: tr2, fixed_points: vec![] };
    }
    let scale = 1.0 + tr2.norm();
    let real_like = tr2.im.abs() <= PARABOLIC_TOL * scale;
    let class = if (tr2 - 4.0).norm() <= PARABOLIC_TOL * scale {
        MonodromyClass::Parabolic
    } else if real_like && tr2.re < 4.0 && tr2.re >= 0.0 {
        MonodromyClass::Elliptic
    } else {
        MonodromyClass::Hyperbolic
    };
    let mut fixed = m.fixed_points();
    if class == MonodromyClass::Parabolic {
        fixed.truncate(1);
    }
    if class == MonodromyClass::Elliptic && m.is_real(1e-12) {
        // Real elliptic maps fix no point of the circle.
        fixed.clear();
    }
    Classification { class, tr2_over_det: tr2, fixed_points: fixed }
}

/// A Moebius map fitted to sampled direction pairs.
#[derive(Debug, Clone, Serialize)]
pub struct FittedMap {
    pub map: MoebiusMap,
    pub chart: Chart,
    /// Largest angle (radians) between predicted and observed held-out images.
    pub residual: f64,
    pub anchors: [usize; 3],
}

/// Fit through three anchor pairs, validate on the rest.
pub fn fit(dim: usize, inputs: &[Vec3], outputs: &[Vec3]) -> Result<FittedMap> {
    let n = inputs.len();
    if n < 4 || outputs.len() != n {
        return Err(BikeError::FitDegenerate(format!("{n} samples")));
    }
    let mut all = inputs.to_vec();
    all.extend_from_slice(outputs);
    let chart = Chart::for_dim(dim, choose_pole(dim, &all));
    let anchors = [0, n / 3, (2 * n) / 3];
    for (i, &p) in anchors.iter().enumerate() {
        for &q in &anchors[i + 1..] {
            if angle(&outputs[p], &outputs[q]) < 1e-9 || angle(&inputs[p], &inputs[q]) < 1e-9 {
                return Err(BikeError::FitDegenerate("anchor images coincide".into()));
            }
        }
    }
    let from = anchors.map(|k| chart.project(&inputs[k]));
    let to = anchors.map(|k| chart.project(&outputs[k]));
    let mut map = MoebiusMap::through_three(from, to)?;
    if dim == 2 {
        map = map.realified();
    }
    let residual = (0..n)
        .filter(|k| !anchors.contains(k))
        .map(|k| angle(&chart.unproject(map.apply(chart.project(&inputs[k]))), &outputs[k]))
        .fold(0.0, f64::max);
    Ok(FittedMap { map, chart, residual, anchors })
}

/// Evenly spread unit start directions: `count` angles in the plane or a
/// Fibonacci lattice on the sphere.
pub fn start_directions(dim: usize, count: usize) -> Vec<Vec3> {
    if dim == 2 {
        (0..count)
            .map(|k| {
                let a = TAU * (k as f64 + 0.25) / count as f64;
                Vec3::new(a.cos(), a.sin(), 0.0)
            })
            .collect()
    } else {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64 + 0.3;
                Vec3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect()
    }
}
