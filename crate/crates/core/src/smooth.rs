//! Continuous bicycle model on a closed sampled front track.
//!
//! The unit vector `e` points from the rear wheel to the front wheel. Keeping
//! the rear velocity aligned with `e` gives
//! `e' = (G' - (G'.e) e) / l`, integrated here in the sample index with RK4
//! (one step per sample by default, midpoint velocities interpolated). In the
//! plane the steering angle `alpha = angle(T) - angle(e)` obeys
//! `alpha' = kappa - sin(alpha) / l` in arc length.

use crate::curve::{SampledCurve, Vec3};
use crate::discrete::Monodromy;
use crate::error::{BikeError, Result};
use crate::frame::frenet_data;
use crate::moebius::{self, Chart, Classification, FittedMap, MoebiusMap, MonodromyClass};
use crate::par::Exec;
use num_complex::Complex64;
use crate::stencil;
use serde::Serialize;

const START_DIRECTIONS: usize = 16;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(BikeError::BadParams(format!("bicycle length must be positive, got {lambda}")))
    }
}

/// Largest sample step, in units of the bicycle length, the RK4 direction
/// integrator is trusted with.
pub const MAX_STEP_OVER_LAMBDA: f64 = 1.0;

fn check_resolution(c: &SampledCurve, lambda: f64) -> Result<()> {
    let step = c.speeds().into_iter().fold(0.0, f64::max);
    if step > MAX_STEP_OVER_LAMBDA * lambda {
        return Err(BikeError::BadParams(format!(
            "lambda = {lambda} is below the sample spacing {step:.3e}; resample the curve finer"
        )));
    }
    Ok(())
}

fn check_branch(branch: usize) -> Result<()> {
    if branch < 2 {
        Ok(())
    } else {
        Err(BikeError::BadParams(format!("branch must be 0 or 1, got {branch}")))
    }
}

/// Index-parameter velocity of the curve on a grid refined `2 * substeps` times.
struct VelocityGrid {
    n: usize,
    fine: usize,
    /// `table[k][j]` is the velocity at index `j + k / fine`.
    table: Vec<Vec<Vec3>>,
}

impl VelocityGrid {
    fn new(c: &SampledCurve, substeps: usize) -> Self {
        let v = stencil::derivative(c.points());
        let fine = 2 * substeps;
        let table = (0..fine)
            .map(|k| if k == 0 { v.clone() } else { stencil::shift(&v, k as f64 / fine as f64) })
            .collect();
        Self { n: c.len(), fine, table }
    }

    /// Velocity at fine-grid position `q` (units of `1 / fine`), periodic.
    fn at(&self, q: isize) -> Vec3 {
        let total = (self.n * self.fine) as isize;
        let q = q.rem_euclid(total) as usize;
        self.table[q % self.fine][q / self.fine]
    }
}

fn rhs(v: &Vec3, e: &Vec3, lambda: f64) -> Vec3 {
    (v - e * v.dot(e)) / lambda
}

fn rk4(grid: &VelocityGrid, e: Vec3, q: isize, dir: isize, lambda: f64) -> Vec3 {
    let h = dir as f64 * 2.0 / grid.fine as f64;
    let (v0, vm, v1) = (grid.at(q), grid.at(q + dir), grid.at(q + 2 * dir));
    let k1 = rhs(&v0, &e, lambda);
    let k2 = rhs(&vm, &(e + k1 * (h / 2.0)), lambda);
    let k3 = rhs(&vm, &(e + k2 * (h / 2.0)), lambda);
    let k4 = rhs(&v1, &(e + k3 * h), lambda);
    (e + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)).normalize()
}

/// Directions along one period of the front track.
#[derive(Debug, Clone)]
pub struct DirectionState {
    pub lambda: f64,
    /// `e` at samples `0..=N`; the last entry is the image after one lap.
    pub e: Vec<Vec3>,
}

impl DirectionState {
    pub fn end(&self) -> Vec3 {
        self.e[self.e.len() - 1]
    }
}

/// Integrate forward over one period from `e0` at sample 0.
pub fn integrate_direction(c: &SampledCurve, lambda: f64, e0: Vec3) -> Result<DirectionState> {
    integrate_direction_with(c, lambda, e0, 1, false)
}

/// As [`integrate_direction`] with `substeps` RK4 steps per sample interval.
/// With `backward` set, `e0` is the direction at the end of the lap and the
/// equation is integrated in reverse; the returned samples are still in
/// forward order and `e[0]` is the pre-image.
pub fn integrate_direction_with(
    c: &SampledCurve,
    lambda: f64,
    e0: Vec3,
    substeps: usize,
    backward: bool,
) -> Result<DirectionState> {
    check_lambda(lambda)?;
    if substeps == 0 {
        return Err(BikeError::BadParams("substeps must be at least 1".into()));
    }
    let grid = VelocityGrid::new(c, substeps);
    Ok(integrate_on(&grid, lambda, planar_unit(c.dim(), e0)?, backward))
}

fn planar_unit(dim: usize, e: Vec3) -> Result<Vec3> {
    let e = if dim == 2 { Vec3::new(e.x, e.y, 0.0) } else { e };
    let n = e.norm();
    if !(n > 1e-12 && n.is_finite()) {
        return Err(BikeError::BadParams("initial direction must be nonzero".into()));
    }
    Ok(e / n)
}

fn integrate_on(grid: &VelocityGrid, lambda: f64, e0: Vec3, backward: bool) -> DirectionState {
    let n = grid.n;
    let per = grid.fine as isize / 2;
    let mut e = vec![e0; n + 1];
    let mut cur = e0;
    if backward {
        for j in (0..n).rev() {
            for s in 0..per {
                let q = ((j + 1) * grid.fine) as isize - 2 * s;
                cur = rk4(grid, cur, q, -1, lambda);
            }
            e[j] = cur;
        }
    } else {
        for j in 0..n {
            for s in 0..per {
                let q = (j * grid.fine) as isize + 2 * s;
                cur = rk4(grid, cur, q, 1, lambda);
            }
            e[j + 1] = cur;
        }
    }
    DirectionState { lambda, e }
}

/// Monodromy of the front track for bicycle length `lambda`, based at sample 0.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothMonodromy {
    pub lambda: f64,
    pub dim: usize,
    /// Fit through integrated directions. Absent when the images collapse
    /// numerically onto the attracting direction.
    pub fit: Option<FittedMap>,
    /// Ordered product of step matrices of a linear system: the Riccati
    /// system for `tan(alpha / 2)` in the plane, the stereographic system in
    /// space. Expressed in `chart`.
    pub product: MoebiusMap,
    /// Projective distance between the fitted map and the product, relative
    /// to the largest product entry.
    pub route_gap: Option<f64>,
    pub chart: Chart,
    /// Classification of the product map.
    pub classification: Classification,
}

impl SmoothMonodromy {
    pub fn map(&self) -> MoebiusMap {
        self.product
    }

    pub fn class(&self) -> MonodromyClass {
        self.classification.class
    }

    /// Real part of the conjugacy invariant.
    pub fn tr2_over_det(&self) -> f64 {
        self.classification.tr2_over_det.re
    }

    pub fn residual(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.residual)
    }

    pub fn as_monodromy(&self) -> Option<Monodromy> {
        self.fit.clone().map(|fit| Monodromy { dim: self.dim, fit, classification: self.classification.clone() })
    }
}

type C2 = [[Complex64; 2]; 2];

/// RK4 product for `Y' = A(j) Y` over one period, with `A` sampled at the
/// samples and the midpoints. Rescaled to unit determinant as it goes.
fn ordered_product(a0: &[C2], am: &[C2]) -> Result<MoebiusMap> {
    let n = a0.len();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let eye: C2 = [[one, zero], [zero, one]];
    let mut y = eye;
    // log det of the accumulated product, tracked from the well-conditioned steps.
    let mut log_det = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let a1 = &a0[(j + 1) % n];
        let k1 = a0[j];
        let k2 = mul(&am[j], &axpy(&eye, 0.5, &k1));
        let k3 = mul(&am[j], &axpy(&eye, 0.5, &k2));
        let k4 = mul(a1, &axpy(&eye, 1.0, &k3));
        let mut step = eye;
        for r in 0..2 {
            for s in 0..2 {
                step[r][s] += (k1[r][s] + k2[r][s] * 2.0 + k3[r][s] * 2.0 + k4[r][s]) / 6.0;
            }
        }
        let det = step[0][0] * step[1][1] - step[0][1] * step[1][0];
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(BikeError::DegenerateCurve(format!("singular monodromy step {j}")));
        }
        y = mul(&step, &y);
        log_det += det.ln();
        let big = y.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        if big > 1e100 || big < 1e-100 {
            y.iter_mut().flatten().for_each(|z| *z /= big);
            log_det -= 2.0 * big.ln();
        }
    }
    let k = (-log_det / 2.0).exp();
    if !k.is_finite() || y.iter().flatten().any(|z| !(z * k).is_finite()) {
        return Err(BikeError::BlowUp { step: n, reason: "monodromy product overflowed".into() });
    }
    let m = MoebiusMap::unimodular(y[0][0] * k, y[0][1] * k, y[1][0] * k, y[1][1] * k);
    // Beyond this the squared trace used by the classifier overflows.
    if [m.a, m.b, m.c, m.d].iter().any(|z| z.norm() > MAX_ENTRY) {
        return Err(BikeError::BlowUp { step: n, reason: "monodromy too hyperbolic to represent".into() });
    }
    Ok(m)
}

const MAX_ENTRY: f64 = 1e120;

fn mul(a: &C2, b: &C2) -> C2 {
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            m[r][s] = a[r][0] * b[0][s] + a[r][1] * b[1][s];
        }
    }
    m
}

fn axpy(y: &C2, h: f64, k: &C2) -> C2 {
    let mut m = *y;
    for r in 0..2 {
        for s in 0..2 {
            m[r][s] += k[r][s] * h;
        }
    }
    m
}

/// Riccati product for `y = tan(alpha / 2)`, in the chart with pole `-T(0)`.
pub fn riccati_monodromy(c: &SampledCurve, lambda: f64) -> Result<(MoebiusMap, Chart)> {
    check_lambda(lambda)?;
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("the Riccati route is planar only".into()));
    }
    let f = frenet_data(c);
    let a = |k: f64, s: f64| -> C2 {
        let p = Complex64::new(s / (2.0 * lambda), 0.0);
        let q = Complex64::new(s * k / 2.0, 0.0);
        [[-p, q], [-q, p]]
    };
    let km = stencil::midpoints(&f.kappa);
    let sm = stencil::midpoints(&f.speed);
    let a0: Vec<C2> = (0..c.len()).map(|j| a(f.kappa[j], f.speed[j])).collect();
    let am: Vec<C2> = (0..c.len()).map(|j| a(km[j], sm[j])).collect();
    let map = ordered_product(&a0, &am)?.realified();
    Ok((map, Chart::planar(-f.t[0])))
}

/// Product for the stereographic coordinate `z` of `e` in `chart`, which obeys
/// `z' = b + (a - d) z - c z^2` with the traceless Hermitian generator
/// `[[v.p, v.u1 + i v.u2], [v.u1 - i v.u2, -v.p]] / (2 lambda)`.
pub fn stereographic_monodromy(c: &SampledCurve, lambda: f64, chart: &Chart) -> Result<MoebiusMap> {
    check_lambda(lambda)?;
    let v = stencil::derivative(c.points());
    let vm = stencil::midpoints(&v);
    let a = |v: &Vec3| -> C2 {
        let k = 1.0 / (2.0 * lambda);
        let p = Complex64::new(v.dot(&chart.pole) * k, 0.0);
        let w = Complex64::new(v.dot(&chart.u1) * k, v.dot(&chart.u2) * k);
        [[p, w], [w.conj(), -p]]
    };
    let a0: Vec<C2> = v.iter().map(a).collect();
    let am: Vec<C2> = vm.iter().map(a).collect();
    let map = ordered_product(&a0, &am)?;
    Ok(if chart.planar { map.realified() } else { map })
}

pub fn monodromy(c: &SampledCurve, lambda: f64) -> Result<SmoothMonodromy> {
    monodromy_with(c, lambda, Exec::default())
}

pub fn monodromy_with(c: &SampledCurve, lambda: f64, exec: Exec) -> Result<SmoothMonodromy> {
    check_lambda(lambda)?;
    check_resolution(c, lambda)?;
    let grid = VelocityGrid::new(c, 1);
    let starts = moebius::start_directions(c.dim(), START_DIRECTIONS);
    let images: Vec<Vec3> = exec.map(&starts, |e| integrate_on(&grid, lambda, *e, false).end());
    let fit = match moebius::fit(c.dim(), &starts, &images) {
        Ok(f) => Some(f),
        Err(BikeError::FitDegenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let t0 = stencil::derivative(c.points())[0].normalize();
    let chart = fit.as_ref().map(|f| f.chart).unwrap_or_else(|| Chart::for_dim(c.dim(), -t0));
    let product = if c.dim() == 2 {
        let (ric, ric_chart) = riccati_monodromy(c, lambda)?;
        ric.rechart(&ric_chart, &chart)?
    } else {
        stereographic_monodromy(c, lambda, &chart)?
    };
    let scale = [product.a, product.b, product.c, product.d].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let route_gap = fit.as_ref().map(|f| f.map.projective_distance(&product) / scale);
    let classification = product.classify().with_chart(&chart);
    Ok(SmoothMonodromy { lambda, dim: c.dim(), fit, product, route_gap, chart, classification })
}

/// Monodromy over a grid of bicycle lengths; failures are kept per entry.
pub fn scan_lambda(c: &SampledCurve, grid: &[f64], exec: Exec) -> Vec<Result<SmoothMonodromy>> {
    exec.map(grid, |&l| monodromy_with(c, l, Exec::Sequential))
}

/// A periodic solution of the direction equation.
#[derive(Debug, Clone, Serialize)]
pub struct SteeringSolution {
    pub lambda: f64,
    pub branch: usize,
    pub class: MonodromyClass,
    /// Arc length at each sample.
    pub x: Vec<f64>,
    /// Unit directions from rear to front at samples `0..N`.
    #[serde(skip)]
    pub e: Vec<Vec3>,
    /// Signed steering angle (plane, unwrapped) or the angle between `e` and
    /// the tangent (space).
    pub alpha: Vec<f64>,
    pub cos_alpha: Vec<f64>,
    /// Angle between `e` at the start and after one lap.
    pub periodicity_defect: f64,
    /// Integral of `cos(alpha)` over one period in arc length.
    pub integral_cos_alpha: f64,
    /// Plane only: sup norm of `alpha' - kappa + sin(alpha) / lambda`.
    pub equation_residual: Option<f64>,
}

/// Orthonormal basis of the tangent space of the direction circle or sphere at `e`.
fn tangent_basis(dim: usize, e: &Vec3) -> Vec<Vec3> {
    if dim == 2 {
        vec![Vec3::new(-e.y, e.x, 0.0)]
    } else {
        let c = Chart::spatial(*e);
        vec![c.u1, c.u2]
    }
}

/// Newton iteration for a fixed point of the lap map `g` near `e`.
fn refine_fixed_point(dim: usize, mut e: Vec3, g: impl Fn(Vec3) -> Vec3) -> Vec3 {
    const H: f64 = 1e-7;
    for _ in 0..12 {
        let basis = tangent_basis(dim, &e);
        let coords = |f: &Vec3| -> Vec<f64> { basis.iter().map(|u| f.dot(u) / f.dot(&e)).collect() };
        let at = |z: &[f64]| -> Vec3 {
            let mut p = e;
            for (u, zi) in basis.iter().zip(z) {
                p += u * *zi;
            }
            p.normalize()
        };
        let g0 = coords(&g(e));
        let size = g0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if size < 1e-15 || !size.is_finite() {
            break;
        }
        let k = basis.len();
        let mut jac = vec![vec![0.0; k]; k];
        for col in 0..k {
            let mut z = vec![0.0; k];
            z[col] = H;
            let gz = coords(&g(at(&z)));
            for row in 0..k {
                jac[row][col] = (gz[row] - g0[row]) / H - if row == col { 1.0 } else { 0.0 };
            }
        }
        let step: Vec<f64> = if k == 1 {
            vec![-g0[0] / jac[0][0]]
        } else {
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            vec![
                -(jac[1][1] * g0[0] - jac[0][1] * g0[1]) / det,
                -(-jac[1][0] * g0[0] + jac[0][0] * g0[1]) / det,
            ]
        };
        if step.iter().any(|s| !s.is_finite()) {
            break;
        }
        e = at(&step);
        if step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-15 {
            break;
        }
    }
    e
}

pub fn periodic_steering(c: &SampledCurve, lambda: f64, branch: usize) -> Result<SteeringSolution> {
    check_branch(branch)?;
    match monodromy(c, lambda) {
        Ok(m) => periodic_steering_from(c, &m, branch),
        // Too hyperbolic to represent: every direction but one is pulled onto
        // the attracting branch within a lap, so iterate the stable lap map.
        Err(BikeError::BlowUp { .. }) => {
            let grid = VelocityGrid::new(c, 1);
            let t0 = stencil::derivative(c.points())[0].normalize();
            let backward = branch == 1;
            let lap = |e: Vec3| {
                let s = integrate_on(&grid, lambda, e, backward);
                if backward {
                    s.e[0]
                } else {
                    s.end()
                }
            };
            let mut e = if backward { -t0 } else { t0 };
            for _ in 0..3 {
                e = lap(e);
            }
            let e = refine_fixed_point(c.dim(), e, lap);
            Ok(steering_solution(c, &grid, lambda, branch, MonodromyClass::Hyperbolic, e, backward))
        }
        Err(e) => Err(e),
    }
}

/// Periodic solution on `branch` (0 attracting, 1 repelling) of a known monodromy.
pub fn periodic_steering_from(c: &SampledCurve, m: &SmoothMonodromy, branch: usize) -> Result<SteeringSolution> {
    check_branch(branch)?;
    let lambda = m.lambda;
    let grid = VelocityGrid::new(c, 1);
    let v = stencil::derivative(c.points());
    let t0 = v[0].normalize();
    let class = m.class();
    let (start, backward) = match class {
        MonodromyClass::Elliptic => return Err(BikeError::NoPeriodicSolution("elliptic".into())),
        MonodromyClass::Identity => (if branch == 0 { t0 } else { -t0 }, false),
        MonodromyClass::Parabolic | MonodromyClass::Hyperbolic => {
            let fps = &m.classification.fixed_points;
            let k = branch.min(fps.len().saturating_sub(1));
            let e = fps
                .get(k)
                .and_then(|f| f.direction)
                .ok_or_else(|| BikeError::NoPeriodicSolution("fixed point unavailable".into()))?;
            let backward = class == MonodromyClass::Hyperbolic && k == 1;
            let lap = |e: Vec3| {
                let s = integrate_on(&grid, lambda, e, backward);
                if backward {
                    s.e[0]
                } else {
                    s.end()
                }
            };
            (refine_fixed_point(c.dim(), e, lap), backward)
        }
    };
    Ok(steering_solution(c, &grid, lambda, branch, class, start, backward))
}

fn steering_solution(
    c: &SampledCurve,
    grid: &VelocityGrid,
    lambda: f64,
    branch: usize,
    class: MonodromyClass,
    start: Vec3,
    backward: bool,
) -> SteeringSolution {
    let v = stencil::derivative(c.points());
    let state = integrate_on(grid, lambda, start, backward);
    let n = c.len();
    let periodicity_defect = moebius::angle(&state.e[0], &state.e[n]);
    let speed: Vec<f64> = v.iter().map(|w| w.norm()).collect();
    let cos_alpha: Vec<f64> = (0..n).map(|j| v[j].dot(&state.e[j]) / speed[j]).collect();
    let integral_cos_alpha = (0..n).map(|j| v[j].dot(&state.e[j])).sum();
    let f = frenet_data(c);
    let (alpha, equation_residual) = if c.dim() == 2 {
        let mut alpha: Vec<f64> = (0..=n)
            .map(|j| {
                let t = v[j % n] / speed[j % n];
                let e = state.e[j];
                (e.x * t.y - e.y * t.x).atan2(e.dot(&t))
            })
            .collect();
        unwrap_angles(&mut alpha);
        let drift = alpha[n] - alpha[0];
        let detrended: Vec<f64> = (0..n).map(|j| alpha[j] - drift * j as f64 / n as f64).collect();
        let da = stencil::derivative(&detrended);
        let residual = (0..n)
            .map(|j| {
                let dads = (da[j] + drift / n as f64) / speed[j];
                (dads - f.kappa[j] + alpha[j].sin() / lambda).abs()
            })
            .fold(0.0, f64::max);
        alpha.truncate(n);
        (alpha, Some(residual))
    } else {
        (cos_alpha.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect(), None)
    };
    let mut e = state.e;
    e.truncate(n);
    SteeringSolution {
        lambda,
        branch,
        class,
        x: f.x,
        e,
        alpha,
        cos_alpha,
        periodicity_defect,
        integral_cos_alpha,
        equation_residual,
    }
}

fn unwrap_angles(a: &mut [f64]) {
    use std::f64::consts::{PI, TAU};
    for j in 1..a.len() {
        let mut d = a[j] - a[j - 1];
        d -= TAU * ((d + PI) / TAU).floor();
        a[j] = a[j - 1] + d;
    }
}

/// A rear-wheel zero bracketed between two samples.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cusp {
    /// Samples bracketing the sign change of the signed rear speed.
    pub lo: usize,
    pub hi: usize,
    /// Fractional sample index of the refined zero.
    pub index: f64,
    /// Rear speed relative to front speed at `index`, from the rear samples.
    pub speed: f64,
}

/// A maximal run of samples between cusps, traced with a fixed coorientation sign.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Arc {
    pub start: usize,
    /// Number of samples in the arc (wrapping).
    pub len: usize,
    /// +1 when the rear wheel moves along `e`, -1 when it moves against it.
    pub sign: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct RearTrack {
    #[serde(skip)]
    pub curve: SampledCurve,
    /// Coorientation `e` at each sample.
    #[serde(skip)]
    pub coorientation: Vec<Vec3>,
    /// Rear velocity is `w * e`; `w` is in units of front arc length.
    pub signed_speed: Vec<f64>,
    pub cusps: Vec<Cusp>,
    pub arcs: Vec<Arc>,
}

pub fn rear_track(c: &SampledCurve, lambda: f64, branch: usize) -> Result<RearTrack> {
    let sol = periodic_steering(c, lambda, branch)?;
    rear_track_from(c, &sol)
}

/// Rear track `G - lambda e` for a given periodic steering solution.
pub fn rear_track_from(c: &SampledCurve, sol: &SteeringSolution) -> Result<RearTrack> {
    let n = c.len();
    if sol.e.len() != n {
        return Err(BikeError::BadParams("steering solution does not match the curve".into()));
    }
    let pts: Vec<Vec3> = (0..n).map(|j| c.point(j) - sol.e[j] * sol.lambda).collect();
    let curve = SampledCurve::new(c.dim(), pts)?;
    let w = sol.cos_alpha.clone();
    let front_speed = c.speeds();
    let rear_vel = stencil::derivative(curve.points());
    let mut cusps = Vec::new();
    for lo in 0..n {
        let hi = (lo + 1) % n;
        if (w[lo] > 0.0) != (w[hi] > 0.0) {
            let index = bracket_zero(&w, lo as f64, lo as f64 + 1.0);
            let speed = stencil::sample_at(&rear_vel, index).norm() / stencil::sample_at(&front_speed, index);
            cusps.push(Cusp { lo, hi, index, speed });
        }
    }
    let arcs = if cusps.is_empty() {
        vec![Arc { start: 0, len: n, sign: if w[0] > 0.0 { 1 } else { -1 } }]
    } else {
        let k = cusps.len();
        (0..k)
            .map(|i| {
                let start = cusps[i].hi;
                let end = cusps[(i + 1) % k].lo;
                let len = (end + n - start) % n + 1;
                Arc { start, len, sign: if w[start] > 0.0 { 1 } else { -1 } }
            })
            .collect()
    };
    Ok(RearTrack { curve, coorientation: sol.e.clone(), signed_speed: w, cusps, arcs })
}

/// Zero of the interpolated periodic samples `f` between indices `a` and `b`.
fn bracket_zero(f: &[f64], mut a: f64, mut b: f64) -> f64 {
    let mut fa = stencil::sample_at(f, a);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let fm = stencil::sample_at(f, m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    0.5 * (a + b)
}

/// The second front track `G - 2 lambda e` sharing the rear track of `branch`.
pub fn bicycle_partner(c: &SampledCurve, lambda: f64, branch: usize) -> Result<SampledCurve> {
    let sol = periodic_steering(c, lambda, branch)?;
    partner_from(c, &sol)
}

pub fn partner_from(c: &SampledCurve, sol: &SteeringSolution) -> Result<SampledCurve> {
    if sol.e.len() != c.len() {
        return Err(BikeError::BadParams("steering solution does not match the curve".into()));
    }
    let pts = (0..c.len()).map(|j| c.point(j) - sol.e[j] * (2.0 * sol.lambda)).collect();
    SampledCurve::new(c.dim(), pts)
}

/// Largest deviations from the correspondence at chord length `d`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrespondenceResidual {
    /// `| |G1 - G2| - d |`.
    pub chord: f64,
    /// Sine of the angle between midpoint velocity and chord, weighted by the
    /// midpoint speed relative to the front speed (vanishes at cusps).
    pub midpoint: f64,
    /// `| |G1'| - |G2'| |` relative to `|G1'|`.
    pub speed: f64,
}

impl CorrespondenceResidual {
    pub fn max(&self) -> f64 {
        self.chord.max(self.midpoint).max(self.speed)
    }
}

pub fn verify_correspondence(g1: &SampledCurve, g2: &SampledCurve, d: f64) -> Result<CorrespondenceResidual> {
    if g1.len() != g2.len() {
        return Err(BikeError::BadParams(format!("sample counts differ: {} vs {}", g1.len(), g2.len())));
    }
    if g1.dim() != g2.dim() {
        return Err(BikeError::DimensionMismatch(format!("{}D vs {}D", g1.dim(), g2.dim())));
    }
    let v1 = stencil::derivative(g1.points());
    let v2 = stencil::derivative(g2.points());
    let mut r = CorrespondenceResidual { chord: 0.0, midpoint: 0.0, speed: 0.0 };
    for j in 0..g1.len() {
        let chord = g1.point(j) - g2.point(j);
        let len = chord.norm();
        let s1 = v1[j].norm();
        let mid = (v1[j] + v2[j]) * 0.5;
        r.chord = r.chord.max((len - d).abs());
        if len > 0.0 {
            r.midpoint = r.midpoint.max(mid.cross(&chord).norm() / (len * s1));
        }
        r.speed = r.speed.max((s1 - v2[j].norm()).abs() / s1);
    }
    Ok(r)
}

/// Derivatives of the planar monodromy at its two fixed points, three ways.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub lambda: f64,
    pub tr2_over_det: f64,
    /// Integral of `cos(alpha)` on each branch.
    pub integrals: [f64; 2],
    /// `exp(-I / lambda)` per branch.
    pub scaled: [f64; 2],
    /// `exp(-I)` per branch.
    pub unscaled: [f64; 2],
    /// Finite-difference derivative of the lap map in angle.
    pub numeric: [f64; 2],
    /// `|1/s1 + 1/s2 - (tr^2/det - 2)|` with the scaled values, relative to
    /// `max(1, tr^2/det - 2)`.
    pub trace_identity_gap: f64,
    /// `|s1 s2 - 1|` with the scaled values.
    pub product_gap: f64,
    /// Largest relative gap between numeric and scaled / unscaled values.
    pub scaled_gap: f64,
    pub unscaled_gap: f64,
}

impl SigmaReport {
    /// The formula agreeing with the numeric derivatives within `tol`, if any.
    pub fn verdict(&self, tol: f64) -> Option<&'static str> {
        if self.scaled_gap <= tol {
            Some("scaled")
        } else if self.unscaled_gap <= tol {
            Some("unscaled")
        } else {
            None
        }
    }
}

pub fn sigma_derivatives(c: &SampledCurve, lambda: f64) -> Result<SigmaReport> {
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("steering angles are planar".into()));
    }
    let m = monodromy(c, lambda)?;
    if m.class() != MonodromyClass::Hyperbolic {
        return Err(BikeError::NotHyperbolic(format!("{:?}", m.class())));
    }
    let grid = VelocityGrid::new(c, 1);
    let mut integrals = [0.0; 2];
    let mut numeric = [0.0; 2];
    for b in 0..2 {
        let sol = periodic_steering_from(c, &m, b)?;
        integrals[b] = sol.integral_cos_alpha;
        // Differentiate the contracting direction of the lap map and invert
        // on the repelling branch.
        let backward = b == 1;
        let e = sol.e[0];
        let lap = |phi: f64| -> f64 {
            let p = Vec3::new(e.x * phi.cos() - e.y * phi.sin(), e.x * phi.sin() + e.y * phi.cos(), 0.0);
            let s = integrate_on(&grid, lambda, p, backward);
            let q = if backward { s.e[0] } else { s.end() };
            (e.x * q.y - e.y * q.x).atan2(e.dot(&q))
        };
        let diff = |h: f64| (lap(h) - lap(-h)) / (2.0 * h);
        let h = 1e-4;
        let d = (4.0 * diff(h / 2.0) - diff(h)) / 3.0;
        numeric[b] = if backward { 1.0 / d } else { d };
    }
    let scaled = integrals.map(|i| (-i / lambda).exp());
    let unscaled = integrals.map(|i| (-i).exp());
    let tr2 = m.tr2_over_det();
    let rel = |a: [f64; 2]| (0..2).map(|k| ((a[k] - numeric[k]) / numeric[k]).abs()).fold(0.0, f64::max);
    Ok(SigmaReport {
        lambda,
        tr2_over_det: tr2,
        integrals,
        scaled,
        unscaled,
        numeric,
        trace_identity_gap: (1.0 / scaled[0] + 1.0 / scaled[1] - (tr2 - 2.0)).abs() / (tr2 - 2.0).max(1.0),
        product_gap: (scaled[0] * scaled[1] - 1.0).abs(),
        scaled_gap: rel(scaled),
        unscaled_gap: rel(unscaled),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_curve, Shape};
    use std::f64::consts::{FRAC_PI_6, PI};

    fn circle(r: f64, n: usize) -> SampledCurve {
        make_curve(&Shape::circle(r), n).unwrap()
    }

    fn perturbed(radius: f64, seed: u64, n: usize) -> SampledCurve {
        make_curve(&Shape::Fourier { radius, amp: 0.05, modes: 4, seed, dim: 2 }, n).unwrap()
    }

    fn rotate(e: &Vec3, a: f64) -> Vec3 {
        Vec3::new(e.x * a.cos() - e.y * a.sin(), e.x * a.sin() + e.y * a.cos(), 0.0)
    }

    fn tangents(c: &SampledCurve) -> Vec<Vec3> {
        stencil::derivative(c.points()).iter().map(|v| v.normalize()).collect()
    }

    #[test]
    fn circle_equilibrium_holds() {
        let c = circle(2.0, 1024);
        let t = tangents(&c);
        let s = integrate_direction(&c, 1.0, rotate(&t[0], -FRAC_PI_6)).unwrap();
        for j in 0..c.len() {
            let expect = rotate(&t[j], -FRAC_PI_6);
            assert!((s.e[j] - expect).norm() < 1e-8);
        }
    }

    #[test]
    fn integrator_is_fourth_order() {
        let c = perturbed(1.0, 4, 128);
        let e0 = Vec3::new(0.3, 0.9, 0.0).normalize();
        let end = |m| integrate_direction_with(&c, 0.6, e0, m, false).unwrap().end();
        let (a, b, d) = (end(1), end(2), end(4));
        let ratio = (a - b).norm() / (b - d).norm();
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn backward_inverts_forward() {
        let c = perturbed(1.0, 2, 256);
        let e0 = Vec3::new(-0.2, 1.0, 0.0).normalize();
        let fwd = integrate_direction_with(&c, 2.0, e0, 1, false).unwrap();
        let back = integrate_direction_with(&c, 2.0, fwd.end(), 1, true).unwrap();
        assert!((back.e[0] - e0).norm() < 1e-10);
    }

    #[test]
    fn circle_monodromy_hyperbolic_with_equilibria() {
        let c = circle(2.0, 512);
        let m = monodromy(&c, 1.0).unwrap();
        assert_eq!(m.class(), MonodromyClass::Hyperbolic);
        let t0 = tangents(&c)[0];
        let angles: Vec<f64> = m
            .classification
            .fixed_points
            .iter()
            .map(|f| {
                let e = f.direction.unwrap();
                (e.x * t0.y - e.y * t0.x).atan2(e.dot(&t0))
            })
            .collect();
        // Attracting alpha = pi/6, repelling alpha = 5 pi/6.
        assert!((angles[0] - FRAC_PI_6).abs() < 1e-8, "{angles:?}");
        assert!((angles[1] - 5.0 * FRAC_PI_6).abs() < 1e-8, "{angles:?}");
    }

    #[test]
    fn circle_monodromy_elliptic_for_long_bicycle() {
        let m = monodromy(&circle(2.0, 512), 5.0).unwrap();
        assert!(matches!(m.class(), MonodromyClass::Elliptic | MonodromyClass::Identity));
        assert!(m.tr2_over_det() <= 4.0);
        // Rotation by 2 pi sqrt(1 - R^2 / l^2): tr^2 = 4 cos^2(pi sqrt(1 - 4/25)).
        let expect = 4.0 * (PI * (1.0f64 - 4.0 / 25.0).sqrt()).cos().powi(2);
        assert!((m.tr2_over_det() - expect).abs() < 1e-9);
    }

    #[test]
    fn product_routes_agree_with_fit() {
        let c = perturbed(2.0, 7, 1024);
        let m = monodromy(&c, 1.0).unwrap();
        assert!(m.route_gap.unwrap() < 1e-7);
        assert!(m.residual().unwrap() < 1e-8);
        let st = stereographic_monodromy(&c, 1.0, &m.chart).unwrap();
        let scale = m.product.a.norm().max(m.product.b.norm()).max(m.product.c.norm()).max(m.product.d.norm());
        assert!(st.projective_distance(&m.product) / scale < 1e-8);
    }

    #[test]
    fn periodic_steering_on_circle() {
        let sol = periodic_steering(&circle(2.0, 1024), 1.0, 0).unwrap();
        assert!(sol.alpha.iter().all(|a| (a - FRAC_PI_6).abs() < 1e-9));
        assert!(sol.periodicity_defect < 1e-12);
        assert!(sol.equation_residual.unwrap() < 1e-9);
    }

    #[test]
    fn periodic_steering_on_perturbed_circle() {
        let c = perturbed(2.0, 11, 1024);
        for b in 0..2 {
            let sol = periodic_steering(&c, 1.0, b).unwrap();
            assert!(sol.periodicity_defect < 1e-7);
            assert!(sol.equation_residual.unwrap() < 1e-7);
        }
    }

    #[test]
    fn elliptic_has_no_periodic_solution() {
        let r = periodic_steering(&circle(2.0, 128), 5.0, 0);
        assert!(matches!(r, Err(BikeError::NoPeriodicSolution(_))));
        assert!(matches!(periodic_steering(&circle(2.0, 128), 1.0, 2), Err(BikeError::BadParams(_))));
    }

    #[test]
    fn concentric_rear_track() {
        let r = rear_track(&circle(5.0, 1024), 3.0, 0).unwrap();
        assert!(r.cusps.is_empty());
        assert_eq!(r.arcs.len(), 1);
        for p in r.curve.points() {
            assert!((p.norm() - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ellipse_rear_track_has_cusps() {
        let c = make_curve(&Shape::Ellipse { a: 2.0, b: 0.5 }, 1024).unwrap();
        let r = rear_track(&c, 0.5, 0).unwrap();
        assert!(r.cusps.len() >= 2 && r.cusps.len() % 2 == 0);
        assert!(r.cusps.iter().all(|c| c.speed < 1e-6));
        // Coorientation alternates across cusps.
        for k in 0..r.arcs.len() {
            assert_eq!(r.arcs[k].sign, -r.arcs[(k + 1) % r.arcs.len()].sign);
        }
    }

    #[test]
    fn partner_of_circle_is_shifted_circle() {
        let c = circle(5.0, 512);
        let p = bicycle_partner(&c, 3.0, 0).unwrap();
        let shift = 10.0 * (0.6f64).asin();
        for j in 0..c.len() {
            assert!((p.point(j).norm() - 5.0).abs() < 1e-8);
            let a = moebius::angle(&c.point(j), &p.point(j));
            assert!((5.0 * a - shift).abs() < 1e-8);
        }
        let r = verify_correspondence(&c, &p, 6.0).unwrap();
        assert!(r.max() < 1e-7, "{r:?}");
    }

    #[test]
    fn partner_twice_with_opposite_branch_returns() {
        let c = perturbed(2.0, 5, 512);
        for b in 0..2 {
            let p = bicycle_partner(&c, 0.4, b).unwrap();
            let back = bicycle_partner(&p, 0.4, 1 - b).unwrap();
            assert!(back.max_distance(&c) < 1e-6);
            assert!(verify_correspondence(&c, &p, 0.8).unwrap().max() < 1e-6);
        }
    }

    #[test]
    fn planted_chord_defect_is_reported() {
        let c = circle(5.0, 256);
        let p = bicycle_partner(&c, 3.0, 0).unwrap().translated(Vec3::new(0.01, 0.0, 0.0));
        let r = verify_correspondence(&c, &p, 6.0).unwrap();
        assert!((r.chord - 0.01).abs() < 2e-3);
    }

    #[test]
    fn sigma_identities() {
        let s = sigma_derivatives(&circle(2.0, 1024), 1.0).unwrap();
        assert!(s.product_gap < 1e-8);
        assert!(s.trace_identity_gap < 1e-8);
        let s = sigma_derivatives(&perturbed(1.0, 3, 1024), 0.7).unwrap();
        assert!(s.trace_identity_gap < 1e-6);
        assert_eq!(s.verdict(1e-5), Some("scaled"));
        assert!(matches!(sigma_derivatives(&circle(2.0, 128), 5.0), Err(BikeError::NotHyperbolic(_))));
    }

    #[test]
    fn space_curve_steering() {
        let c = make_curve(&Shape::TorusKnot { p: 2, q: 3, major: 2.0, minor: 0.5 }, 512).unwrap();
        let m = monodromy(&c, 0.5).unwrap();
        assert_eq!(m.class(), MonodromyClass::Hyperbolic);
        for b in 0..2 {
            assert!(periodic_steering_from(&c, &m, b).unwrap().periodicity_defect < 1e-9);
        }
    }
}
