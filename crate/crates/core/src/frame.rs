//! Discrete Frenet data of a closed curve.
//!
//! Derivatives are taken in the sample index with the periodic stencil and
//! converted to arc length by the chain rule, so the samples need not be
//! exactly equispaced. Planar curves get a signed curvature with `N` the
//! tangent rotated by +90 degrees; space curves get `kappa >= 0`.

use crate::curve::{SampledCurve, Vec3};
use crate::stencil;

/// Curvature below which the principal normal of a space curve is undefined.
pub const KAPPA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FrameData {
    pub dim: usize,
    /// Arc length at each sample, starting at 0.
    pub x: Vec<f64>,
    /// |dGamma/dj|: arc length per unit sample index.
    pub speed: Vec<f64>,
    pub t: Vec<Vec3>,
    pub n: Vec<Vec3>,
    pub b: Vec<Vec3>,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
    /// d kappa / ds
    pub dkappa: Vec<f64>,
    /// d^2 kappa / ds^2
    pub d2kappa: Vec<f64>,
    /// d tau / ds
    pub dtau: Vec<f64>,
    /// Samples whose normal was filled by parallel transport (kappa below
    /// [`KAPPA_FLOOR`]); torsion there is set to zero.
    pub flagged: Vec<bool>,
    pub length: f64,
}

impl FrameData {
    pub fn any_flagged(&self) -> bool {
        self.flagged.iter().any(|&f| f)
    }

    /// d/ds of a per-sample quantity.
    pub fn ds<T: stencil::Field>(&self, values: &[T]) -> Vec<T> {
        stencil::derivative(values)
            .into_iter()
            .zip(&self.speed)
            .map(|(d, s)| d * (1.0 / s))
            .collect()
    }
}

fn arclength_positions(speed: &[f64]) -> Vec<f64> {
    let mid = stencil::midpoints(speed);
    let mut x = Vec::with_capacity(speed.len());
    let mut acc = 0.0;
    for j in 0..speed.len() {
        x.push(acc);
        let next = speed[(j + 1) % speed.len()];
        acc += (speed[j] + 4.0 * mid[j] + next) / 6.0;
    }
    x
}

pub fn frenet_data(c: &SampledCurve) -> FrameData {
    let n_samples = c.len();
    let d1 = stencil::derivative(c.points());
    let d2 = stencil::derivative(&d1);
    let d3 = stencil::derivative(&d2);
    let speed: Vec<f64> = d1.iter().map(|v| v.norm()).collect();
    let t: Vec<Vec3> = d1.iter().zip(&speed).map(|(v, s)| v / *s).collect();
    let mut n = vec![Vec3::zeros(); n_samples];
    let mut b = vec![Vec3::zeros(); n_samples];
    let mut kappa = vec![0.0; n_samples];
    let mut tau = vec![0.0; n_samples];
    let mut flagged = vec![false; n_samples];

    if c.dim() == 2 {
        for j in 0..n_samples {
            let s3 = speed[j].powi(3);
            kappa[j] = (d1[j].x * d2[j].y - d1[j].y * d2[j].x) / s3;
            n[j] = Vec3::new(-t[j].y, t[j].x, 0.0);
            b[j] = Vec3::z();
        }
    } else {
        for j in 0..n_samples {
            let cr = d1[j].cross(&d2[j]);
            let cn = cr.norm();
            kappa[j] = cn / speed[j].powi(3);
            if kappa[j] < KAPPA_FLOOR {
                flagged[j] = true;
            } else {
                b[j] = cr / cn;
                n[j] = b[j].cross(&t[j]);
                tau[j] = d1[j].dot(&d2[j].cross(&d3[j])) / (cn * cn);
            }
        }
        if flagged.iter().any(|&f| f) {
            let start = flagged.iter().position(|&f| !f);
            let start = match start {
                Some(s) => s,
                None => {
                    let t0 = t[0];
                    let seed = if t0.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                    n[0] = (seed - t0 * t0.dot(&seed)).normalize();
                    b[0] = t0.cross(&n[0]);
                    0
                }
            };
            for k in 1..n_samples {
                let j = (start + k) % n_samples;
                if flagged[j] {
                    let prev = n[(j + n_samples - 1) % n_samples];
                    n[j] = (prev - t[j] * t[j].dot(&prev)).normalize();
                    b[j] = t[j].cross(&n[j]);
                }
            }
        }
    }

    let deriv = |v: &[f64]| -> Vec<f64> {
        stencil::derivative(v).iter().zip(&speed).map(|(d, s)| d / s).collect()
    };
    let dkappa = deriv(&kappa);
    let d2kappa = deriv(&dkappa);
    let dtau = deriv(&tau);
    let x = arclength_positions(&speed);
    let length = speed.iter().sum();
    FrameData {
        dim: c.dim(),
        x,
        speed,
        t,
        n,
        b,
        kappa,
        tau,
        dkappa,
        d2kappa,
        dtau,
        flagged,
        length,
    }
}
