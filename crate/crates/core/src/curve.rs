//! Closed sampled curves, polygons and vector fields along curves.

use crate::error::{BikeError, Result};
use crate::stencil;
use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Minimum sample count of a closed curve.
pub const MIN_SAMPLES: usize = 8;

/// A closed curve in the plane or in space, given by cyclically ordered
/// samples. Planar curves are stored with a zero third coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    dim: usize,
    points: Vec<Vec3>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(BikeError::BadParams(format!("dimension must be 2 or 3, got {dim}")))
    }
}

fn diameter_of(points: &[Vec3]) -> f64 {
    // Bounding-box diagonal; within a factor sqrt(3) of the true diameter.
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn check_distinct(points: &[Vec3], closed: bool) -> Result<()> {
    let tol = 1e-12 * diameter_of(points).max(f64::MIN_POSITIVE);
    let n = points.len();
    let pairs = if closed { n } else { n - 1 };
    for j in 0..pairs {
        if (points[(j + 1) % n] - points[j]).norm() <= tol {
            return Err(BikeError::DegenerateCurve(format!(
                "samples {j} and {} coincide",
                (j + 1) % n
            )));
        }
    }
    Ok(())
}

impl SampledCurve {
    pub fn new(dim: usize, points: Vec<Vec3>) -> Result<Self> {
        check_dim(dim)?;
        if points.len() < MIN_SAMPLES {
            return Err(BikeError::TooFewSamples { got: points.len(), need: MIN_SAMPLES });
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(BikeError::BadParams("non-finite coordinate".into()));
        }
        let points = if dim == 2 {
            points.into_iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect()
        } else {
            points
        };
        check_distinct(&points, true)?;
        Ok(Self { dim, points })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let pts = rows_to_points(dim, rows)?;
        Self::new(dim, pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, j: usize) -> Vec3 {
        self.points[j % self.points.len()]
    }

    /// Derivative of the samples with respect to the sample index.
    pub fn velocity(&self) -> Vec<Vec3> {
        stencil::derivative(&self.points)
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.velocity().iter().map(|v| v.norm()).collect()
    }

    /// Perimeter by spectral-order quadrature of the speed.
    pub fn length(&self) -> f64 {
        self.speeds().iter().sum()
    }

    /// Perimeter of the inscribed polygon.
    pub fn polygon_length(&self) -> f64 {
        let n = self.len();
        (0..n).map(|j| (self.point(j + 1) - self.point(j)).norm()).sum()
    }

    pub fn diameter(&self) -> f64 {
        diameter_of(&self.points)
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.len() as f64
    }

    /// Apply a map to every sample; the result is validated again.
    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        Self::new(self.dim, self.points.iter().map(f).collect())
    }

    pub fn translated(&self, by: Vec3) -> Self {
        let by = if self.dim == 2 { Vec3::new(by.x, by.y, 0.0) } else { by };
        Self { dim: self.dim, points: self.points.iter().map(|p| p + by).collect() }
    }

    /// Rigid rotation; planar curves only accept rotations about the z axis.
    pub fn rotated(&self, rot: &Rotation3<f64>) -> Result<Self> {
        if self.dim == 2 {
            let z = rot * Vec3::z();
            if (z - Vec3::z()).norm() > 1e-12 {
                return Err(BikeError::DimensionMismatch(
                    "planar curves rotate about the z axis only".into(),
                ));
            }
        }
        Ok(Self { dim: self.dim, points: self.points.iter().map(|p| rot * p).collect() })
    }

    /// Relabel so that sample `k` becomes sample 0.
    pub fn cyclic_shift(&self, k: usize) -> Self {
        let n = self.len();
        Self { dim: self.dim, points: (0..n).map(|j| self.points[(j + k) % n]).collect() }
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.points.clone();
        pts.reverse();
        Self { dim: self.dim, points: pts }
    }

    /// The same samples viewed as a space curve.
    pub fn embed3(&self) -> Self {
        Self { dim: 3, points: self.points.clone() }
    }

    /// Sup-norm distance between corresponding samples.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_file(&self) -> CurveFile {
        CurveFile { dim: self.dim, closed: true, points: points_to_rows(self.dim, &self.points) }
    }

    pub fn from_file(f: &CurveFile) -> Result<Self> {
        if !f.closed {
            return Err(BikeError::BadParams("open curves are not supported".into()));
        }
        Self::from_rows(f.dim, &f.points)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string(&self.to_file())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: CurveFile = serde_json::from_str(s).map_err(|e| BikeError::Parse(e.to_string()))?;
        Self::from_file(&f)
    }
}

/// On-disk form shared by curves and polygons.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveFile {
    pub dim: usize,
    pub closed: bool,
    pub points: Vec<Vec<f64>>,
}

fn rows_to_points(dim: usize, rows: &[Vec<f64>]) -> Result<Vec<Vec3>> {
    check_dim(dim)?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != dim {
                return Err(BikeError::DimensionMismatch(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    r.len()
                )));
            }
            Ok(Vec3::new(r[0], r[1], if dim == 3 { r[2] } else { 0.0 }))
        })
        .collect()
}

fn points_to_rows(dim: usize, pts: &[Vec3]) -> Vec<Vec<f64>> {
    pts.iter().map(|p| p.as_slice()[..dim].to_vec()).collect()
}

/// An ordered vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    dim: usize,
    vertices: Vec<Vec3>,
    closed: bool,
}

impl Polygon {
    pub fn new(dim: usize, vertices: Vec<Vec3>, closed: bool) -> Result<Self> {
        check_dim(dim)?;
        if vertices.len() < 3 {
            return Err(BikeError::TooFewSamples { got: vertices.len(), need: 3 });
        }
        let vertices: Vec<Vec3> = if dim == 2 {
            vertices.into_iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect()
        } else {
            vertices
        };
        check_distinct(&vertices, closed)?;
        Ok(Self { dim, vertices, closed })
    }

    pub fn closed(dim: usize, vertices: Vec<Vec3>) -> Result<Self> {
        Self::new(dim, vertices, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn vertex(&self, k: usize) -> Vec3 {
        self.vertices[k % self.vertices.len()]
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.len();
        let edges = if self.closed { n } else { n - 1 };
        (0..edges).map(|k| (self.vertex(k + 1) - self.vertex(k)).norm()).sum()
    }

    /// Traverse the closed polygon `times` times in a row.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        let mut v = Vec::with_capacity(self.len() * times);
        for _ in 0..times {
            v.extend_from_slice(&self.vertices);
        }
        Self::new(self.dim, v, self.closed)
    }

    pub fn to_file(&self) -> CurveFile {
        CurveFile { dim: self.dim, closed: self.closed, points: points_to_rows(self.dim, &self.vertices) }
    }

    pub fn from_file(f: &CurveFile) -> Result<Self> {
        Self::new(f.dim, rows_to_points(f.dim, &f.points)?, f.closed)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string(&self.to_file())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: CurveFile = serde_json::from_str(s).map_err(|e| BikeError::Parse(e.to_string()))?;
        Self::from_file(&f)
    }
}

impl From<&SampledCurve> for Polygon {
    fn from(c: &SampledCurve) -> Self {
        Polygon { dim: c.dim, vertices: c.points.clone(), closed: true }
    }
}

/// A vector attached to every sample of a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    vectors: Vec<Vec3>,
}

impl VectorField {
    pub fn new(base: &SampledCurve, vectors: Vec<Vec3>) -> Result<Self> {
        if vectors.len() != base.len() {
            return Err(BikeError::DimensionMismatch(format!(
                "{} vectors for a curve with {} samples",
                vectors.len(),
                base.len()
            )));
        }
        Ok(Self { vectors })
    }

    pub fn constant(base: &SampledCurve, v: Vec3) -> Self {
        Self { vectors: vec![v; base.len()] }
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_based_on(&self, c: &SampledCurve) -> bool {
        self.vectors.len() == c.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { vectors: self.vectors.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { vectors: self.vectors.iter().zip(&other.vectors).map(|(a, b)| a + b).collect() }
    }

    /// Sup norm of the vectors.
    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circle(n: usize) -> SampledCurve {
        let pts = (0..n)
            .map(|j| {
                let t = TAU * j as f64 / n as f64;
                Vec3::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        SampledCurve::new(2, pts).unwrap()
    }

    #[test]
    fn rejects_short_and_repeated() {
        let pts: Vec<Vec3> = (0..5).map(|j| Vec3::new(j as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            SampledCurve::new(2, pts),
            Err(BikeError::TooFewSamples { got: 5, .. })
        ));
        let mut pts = circle(16).points().to_vec();
        pts[3] = pts[2];
        assert!(matches!(SampledCurve::new(2, pts), Err(BikeError::DegenerateCurve(_))));
    }

    #[test]
    fn planar_points_are_flattened() {
        let pts = (0..8).map(|j| Vec3::new((j as f64).cos(), (j as f64).sin(), 5.0)).collect();
        let c = SampledCurve::new(2, pts).unwrap();
        assert!(c.points().iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let c = circle(12);
        let back = SampledCurve::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"dim":3,"closed":true,"points":[[0,0],[1,0],[1,1],[0,1],[2,2],[3,3],[4,4],[5,5]]}"#;
        assert!(matches!(SampledCurve::from_json(bad), Err(BikeError::DimensionMismatch(_))));
    }

    #[test]
    fn spectral_length_of_circle() {
        assert!((circle(64).length() - TAU).abs() < 1e-7);
        assert!((circle(256).length() - TAU).abs() < 1e-10);
        assert!((circle(64).polygon_length() - TAU).abs() > 1e-4);
    }

    #[test]
    fn field_count_checked() {
        let c = circle(10);
        assert!(VectorField::new(&c, vec![Vec3::zeros(); 9]).is_err());
    }
}
