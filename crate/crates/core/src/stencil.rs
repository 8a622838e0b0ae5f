//! Periodic finite-difference and interpolation stencils on uniform index grids.
//!
//! All operators act on closed sequences (index arithmetic is modulo the
//! length) and work in the sample-index parameter, so callers convert to arc
//! length with the local speed. The derivative is the sixth-order centered
//! stencil; it is antisymmetric, which makes discrete integration by parts exact.

use std::ops::{Add, Mul, Sub};

/// Weights of the centered first-derivative stencil for offsets 1, 2, 3.
pub const D1: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Weights for the value at `j + 1/2` from samples `j-2 ..= j+3`.
const MID: [f64; 6] = [
    3.0 / 256.0,
    -25.0 / 256.0,
    150.0 / 256.0,
    150.0 / 256.0,
    -25.0 / 256.0,
    3.0 / 256.0,
];

/// Points used by [`shift`]: offsets `-3 ..= 4` around the base index.
const SHIFT_POINTS: usize = 8;

pub trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Field for nalgebra::Vector3<f64> {
    fn zero() -> Self {
        nalgebra::Vector3::zeros()
    }
}

#[inline]
fn at<T: Copy>(xs: &[T], j: isize) -> T {
    let n = xs.len() as isize;
    xs[j.rem_euclid(n) as usize]
}

/// d/dj of a periodic sequence.
pub fn derivative<T: Field>(xs: &[T]) -> Vec<T> {
    (0..xs.len() as isize)
        .map(|j| {
            let mut acc = T::zero();
            for (k, w) in D1.iter().enumerate() {
                let o = k as isize + 1;
                acc = acc + (at(xs, j + o) - at(xs, j - o)) * *w;
            }
            acc
        })
        .collect()
}

/// Values at the half-integer positions `j + 1/2`.
pub fn midpoints<T: Field>(xs: &[T]) -> Vec<T> {
    (0..xs.len() as isize)
        .map(|j| {
            let mut acc = T::zero();
            for (k, w) in MID.iter().enumerate() {
                acc = acc + at(xs, j - 2 + k as isize) * *w;
            }
            acc
        })
        .collect()
}

/// Lagrange weights for evaluating at fractional offset `mu` in `[0, 1)`
/// from nodes `-3 ..= 4`.
fn lagrange_weights(mu: f64) -> [f64; SHIFT_POINTS] {
    let nodes: [f64; SHIFT_POINTS] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];
    let mut w = [0.0; SHIFT_POINTS];
    for i in 0..SHIFT_POINTS {
        let mut p = 1.0;
        for j in 0..SHIFT_POINTS {
            if i != j {
                p *= (mu - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        w[i] = p;
    }
    w
}

/// Periodic interpolation at `j + s` for every `j`, with `s` in samples.
pub fn shift<T: Field>(xs: &[T], s: f64) -> Vec<T> {
    let base = s.floor();
    let w = lagrange_weights(s - base);
    let b = base as isize;
    (0..xs.len() as isize)
        .map(|j| {
            let mut acc = T::zero();
            for (k, wk) in w.iter().enumerate() {
                acc = acc + at(xs, j + b - 3 + k as isize) * *wk;
            }
            acc
        })
        .collect()
}

/// Interpolated value of the periodic sequence at fractional index `t`.
pub fn sample_at<T: Field>(xs: &[T], t: f64) -> T {
    let base = t.floor();
    let w = lagrange_weights(t - base);
    let b = base as isize;
    let mut acc = T::zero();
    for (k, wk) in w.iter().enumerate() {
        acc = acc + at(xs, b - 3 + k as isize) * *wk;
    }
    acc
}

/// Fourier symbol of [`derivative`]: the stencil multiplies `exp(i j theta)`
/// by `i * symbol(theta)`.
pub fn symbol(theta: f64) -> f64 {
    D1.iter()
        .enumerate()
        .map(|(k, w)| 2.0 * w * ((k as f64 + 1.0) * theta).sin())
        .sum()
}

/// Largest magnitude of [`symbol`] over all wavenumbers.
pub fn symbol_radius() -> f64 {
    (0..=4000)
        .map(|i| symbol(std::f64::consts::PI * i as f64 / 4000.0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn wave(n: usize, k: f64) -> Vec<f64> {
        (0..n).map(|j| (k * TAU * j as f64 / n as f64).sin()).collect()
    }

    #[test]
    fn derivative_is_sixth_order() {
        let err = |n: usize| {
            let xs = wave(n, 3.0);
            let d = derivative(&xs);
            let h = TAU / n as f64;
            d.iter()
                .enumerate()
                .map(|(j, v)| (v / h - 3.0 * (3.0 * h * j as f64).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 50.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn midpoint_and_shift_agree() {
        let xs = wave(64, 2.0);
        let m = midpoints(&xs);
        let s = shift(&xs, 0.5);
        for j in 0..64 {
            let exact = (2.0 * TAU * (j as f64 + 0.5) / 64.0).sin();
            assert!((m[j] - exact).abs() < 2e-6);
            assert!((s[j] - exact).abs() < 2e-8);
        }
        let exact = (2.0 * TAU * 10.5 / 64.0).sin();
        assert!((sample_at(&xs, 10.5) - exact).abs() < 2e-8);
    }

    #[test]
    fn derivative_is_antisymmetric() {
        let u = wave(40, 1.0);
        let v: Vec<f64> = (0..40).map(|j| ((j * j) % 7) as f64).collect();
        let du = derivative(&u);
        let dv = derivative(&v);
        let a: f64 = du.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b: f64 = dv.iter().zip(&u).map(|(x, y)| x * y).sum();
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn radius_value() {
        let r = symbol_radius();
        assert!(r > 1.5 && r < 1.7, "{r}");
    }
}
