//! Conserved quantities and symplectic forms on closed curves.
//!
//! Every integral is a plain sum over samples in the index parameter, which
//! for smooth periodic integrands is spectrally accurate and does not care
//! how the samples are spaced.

use crate::curve::{SampledCurve, Vec3, VectorField};
use crate::error::{BikeError, Result};
use crate::frame::frenet_data;
use crate::moebius::MonodromyClass;
use crate::par::Exec;
use crate::smooth;
use crate::spectral;
use crate::stencil;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilamentIntegrals {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
    /// Samples where the normal is undefined; their torsion terms are dropped.
    pub flagged: usize,
}

impl FilamentIntegrals {
    pub fn as_array(&self) -> [f64; 5] {
        [self.f1, self.f2, self.f3, self.f4, self.f5]
    }
}

pub fn filament_integrals(c: &SampledCurve) -> FilamentIntegrals {
    let f = frenet_data(c);
    let sum = |g: &dyn Fn(usize) -> f64| (0..c.len()).map(|j| g(j) * f.speed[j]).sum::<f64>();
    let k = &f.kappa;
    let t = &f.tau;
    FilamentIntegrals {
        f1: sum(&|_| 1.0),
        f2: sum(&|j| t[j]),
        f3: sum(&|j| k[j] * k[j]),
        f4: sum(&|j| k[j] * k[j] * t[j]),
        f5: sum(&|j| f.dkappa[j].powi(2) + (k[j] * t[j]).powi(2) - k[j].powi(4) / 4.0),
        flagged: f.flagged.iter().filter(|&&b| b).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaCentroid {
    /// `A[i][k] = integral of (G_i G'_k - G_k G'_i)`.
    pub a: Vec<Vec<f64>>,
    /// `integral of (G . G') G`.
    pub j: Vec<f64>,
    /// Plane only: centre of mass of the enclosed domain.
    pub center_of_mass: Option<[f64; 2]>,
    /// Enclosed area too small for a centre of mass.
    pub zero_area: bool,
}

pub const ZERO_AREA: f64 = 1e-10;

pub fn area_centroid(c: &SampledCurve) -> AreaCentroid {
    let d = c.dim();
    let v = stencil::derivative(c.points());
    let mut a = vec![vec![0.0; d]; d];
    let mut j = Vec3::zeros();
    for (p, w) in c.points().iter().zip(&v) {
        for r in 0..d {
            for s in (r + 1)..d {
                let x = p[r] * w[s] - p[s] * w[r];
                a[r][s] += x;
                a[s][r] -= x;
            }
        }
        j += p * p.dot(w);
    }
    let (center_of_mass, zero_area) = if d == 2 {
        let area = a[0][1] / 2.0;
        if area.abs() < ZERO_AREA {
            (None, true)
        } else {
            (Some([-j.y / area, j.x / area]), false)
        }
    } else {
        let norm = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        (None, norm < ZERO_AREA)
    };
    AreaCentroid { a, j: j.as_slice()[..d].to_vec(), center_of_mass, zero_area }
}

fn check_fields(c: &SampledCurve, u: &VectorField, v: &VectorField) -> Result<()> {
    if u.is_based_on(c) && v.is_based_on(c) {
        Ok(())
    } else {
        Err(BikeError::DimensionMismatch("vector fields are not based on this curve".into()))
    }
}

/// `omega(u, v) = integral of u' . v dt`.
pub fn omega_form(c: &SampledCurve, u: &VectorField, v: &VectorField) -> Result<f64> {
    check_fields(c, u, v)?;
    let du = stencil::derivative(u.vectors());
    Ok(du.iter().zip(v.vectors()).map(|(a, b)| a.dot(b)).sum())
}

/// `Omega(u, v) = integral of det(G', u, v) dt`; space curves only.
#[allow(non_snake_case)]
pub fn Omega_form(c: &SampledCurve, u: &VectorField, v: &VectorField) -> Result<f64> {
    if c.dim() != 3 {
        return Err(BikeError::DimensionMismatch("Omega is defined for space curves".into()));
    }
    check_fields(c, u, v)?;
    let g = stencil::derivative(c.points());
    Ok(g.iter().zip(u.vectors().iter().zip(v.vectors())).map(|(g, (a, b))| g.dot(&a.cross(b))).sum())
}

/// One grid point of a monodromy scan.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub lambda: f64,
    /// `[re, im]` of `tr^2 / det`.
    pub tr2_over_det: Option<[f64; 2]>,
    pub class: Option<MonodromyClass>,
    /// Integral of `cos(alpha)` on the periodic solution continuous at `lambda = 0`.
    pub integral_cos_alpha: Option<f64>,
    pub error: Option<String>,
}

pub fn monodromy_spectrum(c: &SampledCurve, grid: &[f64], exec: Exec) -> Vec<SpectrumRow> {
    exec.map(grid, |&lambda| match smooth::monodromy_with(c, lambda, Exec::Sequential) {
        Ok(m) => SpectrumRow {
            lambda,
            tr2_over_det: Some([m.classification.tr2_over_det.re, m.classification.tr2_over_det.im]),
            class: Some(m.class()),
            integral_cos_alpha: None,
            error: None,
        },
        Err(e) => SpectrumRow { lambda, tr2_over_det: None, class: None, integral_cos_alpha: None, error: Some(e.to_string()) },
    })
}

/// `I(lambda)` for either sign of `lambda`. For negative `lambda` the
/// direction `e` solves the equation with `|lambda|` after `e -> -e`, and the
/// family continuous at 0 is the repelling one.
pub fn integral_cos_alpha(c: &SampledCurve, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(c.length());
    }
    if lambda > 0.0 {
        Ok(smooth::periodic_steering(c, lambda, 0)?.integral_cos_alpha)
    } else {
        Ok(-smooth::periodic_steering(c, -lambda, 1)?.integral_cos_alpha)
    }
}

/// Taylor coefficients of `I(lambda)` at 0.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorFit {
    /// `c0..c4`.
    pub coefficients: [f64; 5],
    /// Per coefficient, the spread between polynomial fits of two degrees.
    pub fit_error: [f64; 5],
    /// Largest `|lambda|` used in the fit.
    pub reach: f64,
    /// Samples of the interpolant the fit ran on.
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonodromySpectrum {
    pub rows: Vec<SpectrumRow>,
    pub taylor: TaylorFit,
    pub warnings: Vec<String>,
}

impl MonodromySpectrum {
    pub fn coefficients(&self) -> [f64; 5] {
        self.taylor.coefficients
    }
}

/// Sample count on each side of 0 for the coefficient fit.
const FIT_SAMPLES: usize = 16;

/// Reach of the coefficient fit as a fraction of the smallest radius of
/// curvature. The expansion in `lambda` is only asymptotic for curves with
/// rapidly varying curvature, so the fit stays close to 0.
pub const TAYLOR_REACH: f64 = 0.05;

/// The smallest fitted `lambda` must span this many sample spacings.
const TAYLOR_OVERSAMPLING: f64 = 16.0;

const MAX_TAYLOR_SAMPLES: usize = 1 << 15;

/// The trigonometric interpolant of `c`, sampled finely enough for the
/// coefficient fit, and the fit reach.
fn taylor_curve(c: &SampledCurve) -> Result<(SampledCurve, f64)> {
    let kmax = frenet_data(c).kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if !(kmax > 0.0) {
        return Err(BikeError::DegenerateCurve("curve has no curvature".into()));
    }
    let reach = TAYLOR_REACH / kmax;
    let spacing = c.speeds().into_iter().fold(0.0, f64::max) * c.len() as f64;
    let mut m = c.len();
    while TAYLOR_OVERSAMPLING * spacing / m as f64 > reach {
        m *= 2;
        if m > MAX_TAYLOR_SAMPLES {
            return Err(BikeError::BadParams(format!("coefficient fit would need more than {MAX_TAYLOR_SAMPLES} samples")));
        }
    }
    let fine = if m == c.len() { c.clone() } else { spectral::fourier_resample(c, m)? };
    Ok((fine, reach))
}

/// Least-squares coefficients of `sum_k a_k x^k` over the given powers.
fn power_fit(xs: &[f64], ys: &[f64], powers: &[i32]) -> Result<Vec<f64>> {
    let a = DMatrix::from_fn(xs.len(), powers.len(), |i, k| xs[i].powi(powers[k]));
    let y = DVector::from_column_slice(ys);
    let sol = a.svd(true, true).solve(&y, 1e-14).map_err(|e| BikeError::BadParams(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Taylor coefficients of `I` at 0 from `I(+-lambda)` on `(0, reach]`.
///
/// The even and odd parts are fit separately in `x = lambda / reach`, once
/// with powers up to 10 and once up to 8; the coefficients come from the
/// larger fit and the difference is the error estimate.
fn fit_lambdas(c: &SampledCurve, reach: f64) -> Result<Vec<f64>> {
    let floor = 2.0 * smooth::MAX_STEP_OVER_LAMBDA * c.speeds().into_iter().fold(0.0, f64::max);
    let pos: Vec<f64> =
        (1..=FIT_SAMPLES).map(|j| reach * j as f64 / FIT_SAMPLES as f64).filter(|&l| l >= floor).collect();
    if pos.len() < 8 {
        return Err(BikeError::BadParams(format!(
            "lambda reach {reach} leaves too few samples above the resolution floor {floor:.3e}"
        )));
    }
    Ok(pos)
}

fn even_powers(top: i32) -> Vec<i32> {
    (1..=top / 2).map(|k| 2 * k).collect()
}

/// Taylor coefficients of `I` at 0 from `I(+-lambda)` on `(0, reach]`.
///
/// The even and odd parts are fit separately in `x = lambda / reach`, once
/// with powers up to 10 and once up to 8; the coefficients come from the
/// larger fit and the difference is the error estimate.
fn taylor_fit(c: &SampledCurve, reach: f64, exec: Exec) -> Result<([f64; 5], [f64; 5])> {
    let pos = fit_lambdas(c, reach)?;
    let both: Vec<f64> = pos.iter().flat_map(|&l| [l, -l]).collect();
    let vals: Vec<f64> = exec.map(&both, |&l| integral_cos_alpha(c, l)).into_iter().collect::<Result<_>>()?;
    let i0 = c.length();
    let xs: Vec<f64> = pos.iter().map(|l| l / reach).collect();
    let even: Vec<f64> = vals.chunks(2).map(|p| (p[0] + p[1]) / 2.0 - i0).collect();
    let odd: Vec<f64> = vals.chunks(2).map(|p| (p[0] - p[1]) / 2.0).collect();
    let fit = |top: i32| -> Result<[f64; 5]> {
        let od: Vec<i32> = (0..top / 2).map(|k| 2 * k + 1).collect();
        let e = power_fit(&xs, &even, &even_powers(top))?;
        let o = power_fit(&xs, &odd, &od)?;
        Ok([i0, o[0] / reach, e[0] / reach.powi(2), o[1] / reach.powi(3), e[1] / reach.powi(4)])
    };
    let hi = fit(10)?;
    let lo = fit(8)?;
    let mut err = [0.0; 5];
    for k in 1..5 {
        err[k] = (hi[k] - lo[k]).abs();
    }
    Ok((hi, err))
}

/// Taylor coefficients of `integral_cos_alpha` at `lambda = 0` for a planar curve,
/// fit on its trigonometric interpolant.
pub fn taylor_coefficients(c: &SampledCurve, exec: Exec) -> Result<TaylorFit> {
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("steering angles are planar".into()));
    }
    let (fine, reach) = taylor_curve(c)?;
    let (mut coefficients, fit_error) = taylor_fit(&fine, reach, exec)?;
    coefficients[0] = c.length();
    Ok(TaylorFit { coefficients, fit_error, reach, samples: fine.len() })
}

/// Gradient of `integral_cos_alpha(c, lambda)` with respect to the samples
/// of a planar curve, for `lambda > 0`.
///
/// First-order perturbation of the Floquet multiplier of the Riccati system:
/// with `alpha` and `beta` the attracting and repelling periodic steering
/// angles, `dI = sum_j P_j ds_j + Q_j dtheta_j` where `s` is the speed and
/// `theta = s kappa` the turning per index.
pub fn integral_cos_alpha_gradient(c: &SampledCurve, lambda: f64) -> Result<Vec<Vec3>> {
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("steering angles are planar".into()));
    }
    if !(lambda > 0.0) {
        return Err(BikeError::BadParams(format!("gradient needs lambda > 0, got {lambda}")));
    }
    let a = smooth::periodic_steering(c, lambda, 0)?.alpha;
    let b = smooth::periodic_steering(c, lambda, 1)?.alpha;
    let d1 = stencil::derivative(c.points());
    let d2 = stencil::derivative(&d1);
    let n = c.len();
    let mut on_d1 = vec![Vec3::zeros(); n];
    let mut on_d2 = vec![Vec3::zeros(); n];
    for j in 0..n {
        let s = d1[j].norm();
        let t = d1[j] / s;
        let theta = (d1[j].x * d2[j].y - d1[j].y * d2[j].x) / (s * s);
        let half = ((a[j] - b[j]) / 2.0).sin();
        if half.abs() < 1e-12 {
            return Err(BikeError::NotHyperbolic(format!("steering branches meet at sample {j}")));
        }
        let p = -((a[j] + b[j]) / 2.0).sin() / half;
        let q = lambda * ((a[j] - b[j]) / 2.0).cos() / half;
        on_d1[j] = t * p + (Vec3::new(d2[j].y, -d2[j].x, 0.0) / (s * s) - t * (2.0 * theta / s)) * q;
        on_d2[j] = Vec3::new(-d1[j].y, d1[j].x, 0.0) * (q / (s * s));
    }
    // The stencil is antisymmetric, so its transpose is its negative.
    let back = stencil::derivative(&on_d2);
    let inner: Vec<Vec3> = (0..n).map(|j| on_d1[j] - back[j]).collect();
    Ok(stencil::derivative(&inner).into_iter().map(|v| -v).collect())
}

fn fit_gradient(c: &SampledCurve, reach: f64, index: usize, exec: Exec) -> Result<Vec<Vec3>> {
    let n = c.len();
    let t: Vec<Vec3> = stencil::derivative(c.points()).iter().map(|v| v.normalize()).collect();
    let length_gradient: Vec<Vec3> = stencil::derivative(&t).into_iter().map(|v| -v).collect();
    match index {
        0 => return Ok(length_gradient),
        2 | 4 => {}
        _ => return Err(BikeError::BadParams(format!("only c0, c2 and c4 have gradients, got c{index}"))),
    }
    let pos = fit_lambdas(c, reach)?;
    let powers = even_powers(10);
    let design = DMatrix::from_fn(pos.len(), powers.len(), |i, k| (pos[i] / reach).powi(powers[k]));
    let pinv = design.pseudo_inverse(1e-14).map_err(|e| BikeError::BadParams(e.to_string()))?;
    let row = index / 2 - 1;
    let scale = reach.powi(index as i32);
    let grads: Vec<Vec<Vec3>> =
        exec.map(&pos, |&l| integral_cos_alpha_gradient(c, l)).into_iter().collect::<Result<_>>()?;
    let mut out = vec![Vec3::zeros(); n];
    for (i, g) in grads.iter().enumerate() {
        let w = pinv[(row, i)] / scale;
        for ((o, gi), gl) in out.iter_mut().zip(g).zip(&length_gradient) {
            *o += (gi - gl) * w;
        }
    }
    Ok(out)
}

/// Gradient of the even coefficient `c_index` of [`taylor_coefficients`] with
/// respect to the samples of `c`.
///
/// The coefficients are linear in the sampled `I(lambda) - I(0)`, so this is a
/// weighted sum of [`integral_cos_alpha_gradient`] minus the length gradient,
/// pulled back through the interpolation.
pub fn taylor_coefficient_gradient(c: &SampledCurve, index: usize, exec: Exec) -> Result<Vec<Vec3>> {
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("steering angles are planar".into()));
    }
    let (fine, reach) = taylor_curve(c)?;
    let g = fit_gradient(&fine, reach, index, exec)?;
    if fine.len() == c.len() {
        return Ok(g);
    }
    // Transpose of trigonometric upsampling from n to m samples.
    let factor = fine.len() as f64 / c.len() as f64;
    Ok(spectral::trig_resample(&g, c.len()).into_iter().map(|v| v * factor).collect())
}

pub fn cos_alpha_spectrum(c: &SampledCurve, grid: &[f64], exec: Exec) -> Result<MonodromySpectrum> {
    if c.dim() != 2 {
        return Err(BikeError::DimensionMismatch("steering angles are planar".into()));
    }
    let mut rows = monodromy_spectrum(c, grid, exec);
    let integrals = exec.map(grid, |&l| integral_cos_alpha(c, l));
    for (row, i) in rows.iter_mut().zip(integrals) {
        match i {
            Ok(v) => row.integral_cos_alpha = Some(v),
            Err(e) => {
                if row.error.is_none() {
                    row.error = Some(e.to_string());
                }
            }
        }
    }
    let warnings: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("lambda = {}: {e}", r.lambda)))
        .collect();
    let taylor = taylor_coefficients(c, exec)?;
    Ok(MonodromySpectrum { rows, taylor, warnings })
}
