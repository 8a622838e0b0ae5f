//! FFT helpers for periodic sample sequences.

use crate::curve::{SampledCurve, Vec3};
use crate::error::{BikeError, Result};
use crate::stencil;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

fn forward(xs: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn inverse_real(mut buf: Vec<Complex64>) -> Vec<f64> {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Signed wavenumber of FFT bin `k` for length `n`.
fn wavenumber(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

fn columns(xs: &[Vec3]) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|i| xs.iter().map(|v| v[i]).collect())
}

fn from_columns(c: &[Vec<f64>; 3]) -> Vec<Vec3> {
    (0..c[0].len()).map(|j| Vec3::new(c[0][j], c[1][j], c[2][j])).collect()
}

/// Zero-mean periodic `u` with `stencil::derivative(u) = g`.
///
/// `g` must have zero sum, up to `tol` times its largest entry. The Nyquist
/// mode, which the centered stencil cannot see, is dropped.
pub fn antiderivative(g: &[Vec3], tol: f64) -> Result<Vec<Vec3>> {
    let n = g.len();
    let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mean: Vec3 = g.iter().sum::<Vec3>() / n as f64;
    if mean.norm() > tol * scale {
        return Err(BikeError::BadParams(format!(
            "antiderivative needs a zero-mean density, mean is {:.3e}",
            mean.norm()
        )));
    }
    let cols = columns(g).map(|col| {
        let mut f = forward(&col);
        for (k, z) in f.iter_mut().enumerate() {
            let m = wavenumber(k, n);
            let s = stencil::symbol(TAU * m as f64 / n as f64);
            *z = if m == 0 || 2 * m.unsigned_abs() == n || s == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                *z / Complex64::new(0.0, s)
            };
        }
        inverse_real(f)
    });
    Ok(from_columns(&cols))
}

/// Trigonometric interpolation of a closed sequence onto `m` equally spaced samples.
pub fn trig_resample(xs: &[Vec3], m: usize) -> Vec<Vec3> {
    let n = xs.len();
    let cols = columns(xs).map(|col| {
        let f = forward(&col);
        let mut g = vec![Complex64::new(0.0, 0.0); m];
        let kmax = (n.min(m) - 1) / 2;
        for k in 0..=kmax {
            g[k] = f[k];
            if k > 0 {
                g[m - k] = f[n - k];
            }
        }
        // An even-length Nyquist mode is split evenly when upsampling.
        if n % 2 == 0 && m > n {
            let h = f[n / 2] * 0.5;
            g[n / 2] = h;
            g[m - n / 2] = h;
        } else if m % 2 == 0 && m < n {
            let h = f[m / 2] + f[n - m / 2];
            g[m / 2] = h;
        } else if n == m && n % 2 == 0 {
            g[n / 2] = f[n / 2];
        }
        let scale = m as f64 / n as f64;
        inverse_real(g.into_iter().map(|z| z * scale).collect())
    });
    from_columns(&cols)
}

/// The curve through the trigonometric interpolant of `c`, sampled `m` times.
pub fn fourier_resample(c: &SampledCurve, m: usize) -> Result<SampledCurve> {
    SampledCurve::new(c.dim(), trig_resample(c.points(), m))
}
