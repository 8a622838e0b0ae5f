//! Discrete bicycle transformation of polygons.
//!
//! Given a polygon `P` and a segment `P_k Q_k` of length `d`, the next point
//! `Q_{k+1}` completes the isosceles trapezoid `P_k Q_k P_{k+1} Q_{k+1}`: the
//! segment is translated by the edge `P_k P_{k+1}` and the translated end is
//! reflected in the line through `Q_k` and `P_{k+1}`. In space the reflection
//! is the half-turn about that line.

use crate::curve::{Polygon, Vec3};
use crate::error::{BikeError, Result};
use crate::moebius::{self, Classification, FittedMap};
use crate::par::Exec;
use serde::Serialize;

/// Steps whose translated point is within this angle of the reflection line
/// are reported as near-collinear.
pub const COLLINEAR_ANGLE: f64 = 1e-6;

const START_DIRECTIONS: usize = 16;

fn length_tol(d: f64) -> f64 {
    1e-9 * d.max(1.0)
}

/// Reflection of `x` in the line through `a` with direction `a -> b`.
fn reflect_in_line(x: &Vec3, a: &Vec3, b: &Vec3) -> Option<Vec3> {
    let dir = b - a;
    let len = dir.norm();
    if len < 1e-12 {
        return None;
    }
    let u = dir / len;
    let proj = a + u * (x - a).dot(&u);
    Some(proj * 2.0 - x)
}

pub fn trapezoid_step(pk: &Vec3, pk1: &Vec3, qk: &Vec3, d: f64) -> Result<Vec3> {
    step(pk, pk1, qk, d, 0).map(|(q, _)| q)
}

fn step(pk: &Vec3, pk1: &Vec3, qk: &Vec3, d: f64, index: usize) -> Result<(Vec3, bool)> {
    if ((pk - qk).norm() - d).abs() > length_tol(d) {
        return Err(BikeError::BadParams(format!(
            "step {index}: |P_k - Q_k| = {} differs from d = {d}",
            (pk - qk).norm()
        )));
    }
    let translated = qk + (pk1 - pk);
    let q = reflect_in_line(&translated, qk, pk1).ok_or(BikeError::DegenerateLine { step: index })?;
    let a = moebius::angle(&(translated - qk).normalize(), &(pk1 - qk).normalize());
    let near = a < COLLINEAR_ANGLE || a > std::f64::consts::PI - COLLINEAR_ANGLE;
    Ok((q, near))
}

#[derive(Debug, Clone)]
pub struct Transformed {
    /// `Q_1 .. Q_n`.
    pub q: Vec<Vec3>,
    /// `Q_{n+1}`, the image of `Q_1` after one lap.
    pub q_end: Vec3,
    /// `|Q_{n+1} - Q_1|`.
    pub closure_defect: f64,
    /// Steps flagged as near-collinear.
    pub near_collinear: Vec<usize>,
}

impl Transformed {
    pub fn polygon(&self, dim: usize) -> Result<Polygon> {
        Polygon::closed(dim, self.q.clone())
    }
}

pub fn transform_polygon(p: &Polygon, q1: Vec3, d: f64) -> Result<Transformed> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(BikeError::BadParams(format!("d must be positive, got {d}")));
    }
    let q1 = if p.dim() == 2 { Vec3::new(q1.x, q1.y, 0.0) } else { q1 };
    let n = p.len();
    let mut q = Vec::with_capacity(n);
    let mut near_collinear = Vec::new();
    let mut cur = q1;
    for k in 0..n {
        q.push(cur);
        let (next, near) = step(&p.vertex(k), &p.vertex(k + 1), &cur, d, k)?;
        if near {
            near_collinear.push(k);
        }
        cur = next;
    }
    Ok(Transformed { closure_defect: (cur - q1).norm(), q, q_end: cur, near_collinear })
}

/// One lap of the discrete transformation as a map of unit directions at `P_1`.
pub fn direction_map(p: &Polygon, d: f64, e: &Vec3) -> Result<Vec3> {
    let p1 = p.vertex(0);
    let t = transform_polygon(p, p1 + e * d, d)?;
    Ok((t.q_end - p1) / d)
}

/// A monodromy fitted as a Moebius map, with its classification.
#[derive(Debug, Clone, Serialize)]
pub struct Monodromy {
    pub dim: usize,
    pub fit: FittedMap,
    pub classification: Classification,
}

impl Monodromy {
    pub fn from_fit(dim: usize, fit: FittedMap) -> Self {
        let classification = fit.map.classify().with_chart(&fit.chart);
        Self { dim, fit, classification }
    }

    pub fn residual(&self) -> f64 {
        self.fit.residual
    }
}

pub fn discrete_monodromy(p: &Polygon, d: f64, exec: Exec) -> Result<Monodromy> {
    if !p.is_closed() {
        return Err(BikeError::BadParams("monodromy needs a closed polygon".into()));
    }
    let starts = moebius::start_directions(p.dim(), START_DIRECTIONS);
    let images: Result<Vec<Vec3>> =
        exec.map(&starts, |e| direction_map(p, d, e)).into_iter().collect();
    let fit = moebius::fit(p.dim(), &starts, &images?)?;
    Ok(Monodromy::from_fit(p.dim(), fit))
}

/// `P` traversed backwards from `P_1`. Its lap map inverts the lap map of `P`.
pub fn reversed(p: &Polygon) -> Result<Polygon> {
    let v = p.vertices();
    let mut out = vec![v[0]];
    out.extend(v[1..].iter().rev());
    Polygon::new(p.dim(), out, p.is_closed())
}

const POLISH_ITERATIONS: usize = 60;

/// Iterate the lap map of `p` from `e` until it settles.
fn polish(p: &Polygon, d: f64, mut e: Vec3) -> Vec3 {
    for _ in 0..POLISH_ITERATIONS {
        let Ok(next) = direction_map(p, d, &e) else { return e };
        let step = (next - e).norm();
        e = next;
        if step < 1e-15 {
            break;
        }
    }
    e
}

/// Start points `Q_1 = P_1 + d e` for every fixed direction `e` of the
/// monodromy, attracting first.
///
/// A fitted fixed point is only as good as the fit, and a strongly repelling
/// one amplifies that error over the lap. Each direction is therefore
/// polished by iterating where the map contracts: forward at the attracting
/// point, around the reversed polygon at the repelling one.
pub fn closing_starts(p: &Polygon, m: &Monodromy, d: f64) -> Vec<Vec3> {
    let back = reversed(p).ok();
    m.classification
        .fixed_points
        .iter()
        .filter_map(|f| {
            let e = f.direction?;
            let mu = f.multiplier.norm();
            let e = if mu < 1.0 - 1e-9 {
                polish(p, d, e)
            } else if mu > 1.0 + 1e-9 {
                back.as_ref().map_or(e, |b| polish(b, d, e))
            } else {
                e
            };
            Some(p.vertex(0) + e * d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2(x: f64, y: f64) -> Vec3 {
        Vec3::new(x, y, 0.0)
    }

    #[test]
    fn hand_evaluated_step() {
        let q = trapezoid_step(&v2(0.0, 0.0), &v2(1.0, 0.0), &v2(0.0, 1.0), 1.0).unwrap();
        assert!((q - v2(0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn collinear_slide() {
        let q = trapezoid_step(&v2(0.0, 0.0), &v2(1.0, 0.0), &v2(2.0, 0.0), 2.0).unwrap();
        assert!((q - v2(3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_line() {
        // Q_k coincides with P_{k+1}.
        let r = trapezoid_step(&v2(0.0, 0.0), &v2(1.0, 0.0), &v2(1.0, 0.0), 1.0);
        assert_eq!(r, Err(BikeError::DegenerateLine { step: 0 }));
        let sq = Polygon::closed(2, vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)]).unwrap();
        let r = transform_polygon(&sq, v2(1.0, 0.0), 1.0);
        assert_eq!(r.err(), Some(BikeError::DegenerateLine { step: 0 }));
    }

    #[test]
    fn square_preserves_edges() {
        let sq = Polygon::closed(2, vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)]).unwrap();
        let t = transform_polygon(&sq, v2(-1.0, 0.0), 1.0).unwrap();
        let mut qs = t.q.clone();
        qs.push(t.q_end);
        for k in 0..4 {
            let pe = (sq.vertex(k + 1) - sq.vertex(k)).norm();
            let qe = (qs[k + 1] - qs[k]).norm();
            assert!((pe - qe).abs() < 1e-14);
            assert!(((sq.vertex(k + 1) - qs[k + 1]).norm() - 1.0).abs() < 1e-14);
        }
        // Q_1 = (-1,0) lies on the first edge line, so the first step is a slide.
        assert_eq!(t.near_collinear.first(), Some(&0));
    }

    #[test]
    fn bad_start_rejected() {
        let sq = Polygon::closed(2, vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)]).unwrap();
        assert!(matches!(transform_polygon(&sq, v2(0.0, -2.0), 1.0), Err(BikeError::BadParams(_))));
    }
}
