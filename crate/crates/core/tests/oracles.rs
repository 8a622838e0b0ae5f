//! Independent reference computations checked against the library.

use bikelab::discrete::{closing_starts, discrete_monodromy, trapezoid_step, transform_polygon};
use bikelab::experiments::theorems;
use bikelab::experiments::CurveSource;
use bikelab::invariants::{area_centroid, filament_integrals, taylor_coefficients};
use bikelab::smooth::{bicycle_partner, integrate_direction};
use bikelab::{make_curve, Exec, Polygon, Shape, Vec3};
use nalgebra::{Rotation3, Unit};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Trapezoid rule on `[0, 2 pi)`, spectrally accurate for smooth periodic `f`.
fn periodic_integral(m: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..m).map(|k| f(TAU * k as f64 / m as f64)).sum::<f64>() * TAU / m as f64
}

/// Derivatives `r, r', r'', r'''` of the (p, q) torus knot by the Leibniz rule.
fn torus_knot_jet(p: f64, q: f64, big: f64, small: f64, t: f64) -> [Vec3; 4] {
    let rho = |k: i32| {
        let v = small * q.powi(k) * (q * t + k as f64 * FRAC_PI_2).cos();
        if k == 0 { big + v } else { v }
    };
    let cos_d = |m: i32| p.powi(m) * (p * t + m as f64 * FRAC_PI_2).cos();
    let sin_d = |m: i32| p.powi(m) * (p * t + m as f64 * FRAC_PI_2).sin();
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let mut out = [Vec3::zeros(); 4];
    for (n, o) in out.iter_mut().enumerate() {
        let n = n as i32;
        let x: f64 = (0..=n).map(|k| binom[n as usize][k as usize] * rho(k) * cos_d(n - k)).sum();
        let y: f64 = (0..=n).map(|k| binom[n as usize][k as usize] * rho(k) * sin_d(n - k)).sum();
        let z = small * q.powi(n) * (q * t + n as f64 * FRAC_PI_2).sin();
        *o = Vec3::new(x, y, z);
    }
    out
}

#[test]
fn torus_knot_integrals_match_symbolic_frenet_data() {
    let (p, q, big, small) = (2.0, 3.0, 2.0, 0.5);
    let local = |t: f64| {
        let [_, r1, r2, r3] = torus_knot_jet(p, q, big, small, t);
        let c = r1.cross(&r2);
        let speed = r1.norm();
        let kappa = c.norm() / speed.powi(3);
        let tau = c.dot(&r3) / c.norm_squared();
        let dkappa_dt = (c.dot(&r1.cross(&r3)) / c.norm() * speed.powi(3) - c.norm() * 3.0 * speed * r1.dot(&r2)) / speed.powi(6);
        (speed, kappa, tau, dkappa_dt / speed)
    };
    let m = 8192;
    let exact = [
        periodic_integral(m, |t| local(t).0),
        periodic_integral(m, |t| local(t).0 * local(t).2),
        periodic_integral(m, |t| local(t).0 * local(t).1.powi(2)),
        periodic_integral(m, |t| local(t).0 * local(t).1.powi(2) * local(t).2),
        periodic_integral(m, |t| {
            let (s, k, tau, dk) = local(t);
            s * (dk * dk + (k * tau).powi(2) - k.powi(4) / 4.0)
        }),
    ];
    let c = make_curve(&Shape::TorusKnot { p: 2, q: 3, major: big, minor: small }, 2048).unwrap();
    let got = filament_integrals(&c).as_array();
    for k in 0..5 {
        let rel = (got[k] - exact[k]).abs() / exact[k].abs();
        assert!(rel < 1e-7, "F{}: {} vs {} (rel {rel:.2e})", k + 1, got[k], exact[k]);
    }
}

/// Ellipse `(a cos t, b sin t)`: speed, curvature and its arc-length derivative.
fn ellipse_local(a: f64, b: f64, t: f64) -> (f64, f64, f64) {
    let q = a * a * t.sin().powi(2) + b * b * t.cos().powi(2);
    let speed = q.sqrt();
    let kappa = a * b / q.powf(1.5);
    let dq = 2.0 * (a * a - b * b) * t.sin() * t.cos();
    let dkappa_dt = -1.5 * a * b * dq / q.powf(2.5);
    (speed, kappa, dkappa_dt / speed)
}

#[test]
fn small_bicycle_coefficients_match_the_perturbative_series() {
    // Expanding the periodic steering angle in powers of the bicycle length,
    // alpha = l k - l^2 k' + l^3 (k'' + k^3 / 6) + ..., integrates to
    // c2 = -(1/2) int k^2 and c4 = int (k'^2 / 2 - k^4 / 8).
    let (a, b) = (1.0, 0.8);
    let m = 8192;
    let c2 = -0.5 * periodic_integral(m, |t| {
        let (s, k, _) = ellipse_local(a, b, t);
        s * k * k
    });
    let c4 = periodic_integral(m, |t| {
        let (s, k, dk) = ellipse_local(a, b, t);
        s * (dk * dk / 2.0 - k.powi(4) / 8.0)
    });
    let length = periodic_integral(m, |t| ellipse_local(a, b, t).0);
    let c = make_curve(&Shape::Ellipse { a, b }, 1024).unwrap();
    let fit = taylor_coefficients(&c, Exec::Parallel).unwrap();
    assert!((fit.coefficients[0] - length).abs() < 1e-10 * length);
    assert!((fit.coefficients[2] - c2).abs() < 1e-3 * c2.abs(), "c2 {} vs {c2}", fit.coefficients[2]);
    let tol = (3.0 * fit.fit_error[4]).max(1e-2 * c4.abs());
    assert!((fit.coefficients[4] - c4).abs() < tol, "c4 {} vs {c4} (fit error {:.1e})", fit.coefficients[4], fit.fit_error[4]);
    // The series is even in the bicycle length.
    for k in [1, 3] {
        assert!(fit.coefficients[k].abs() < 3.0 * fit.fit_error[k] + 1e-8, "c{k} = {}", fit.coefficients[k]);
    }
}

#[test]
fn area_bivector_matches_the_enclosed_area_and_shoelace() {
    let (a, b) = (2.0, 0.7);
    let c = make_curve(&Shape::Ellipse { a, b }, 1024).unwrap();
    let a12 = area_centroid(&c).a[0][1];
    assert!((a12 - 2.0 * PI * a * b).abs() < 1e-9, "{a12}");
    let pts = c.points();
    let shoelace: f64 = (0..pts.len()).map(|j| {
        let (p, q) = (pts[j], pts[(j + 1) % pts.len()]);
        p.x * q.y - q.x * p.y
    }).sum::<f64>() / 2.0;
    // The inscribed polygon misses O(1/N^2) of the area.
    assert!((shoelace - PI * a * b).abs() < 1e-4);
    assert!((theorems::shoelace_area(&c) - PI * a * b).abs() < 1e-8);
}

#[test]
fn trapezoid_step_is_a_reflection_matrix_in_the_plane() {
    let (pk, pk1, qk) = (Vec3::new(0.3, -0.2, 0.0), Vec3::new(1.1, 0.4, 0.0), Vec3::new(0.3, 0.5, 0.0));
    let d = (qk - pk).norm();
    // Reflect the translated end in the line through Q_k and P_{k+1}.
    let x = qk + (pk1 - pk) - qk;
    let phi = (pk1 - qk).y.atan2((pk1 - qk).x);
    let (c2, s2) = ((2.0 * phi).cos(), (2.0 * phi).sin());
    let oracle = qk + Vec3::new(c2 * x.x + s2 * x.y, s2 * x.x - c2 * x.y, 0.0);
    let got = trapezoid_step(&pk, &pk1, &qk, d).unwrap();
    assert!((got - oracle).norm() < 1e-14);
}

#[test]
fn trapezoid_step_is_a_half_turn_in_space() {
    let (pk, pk1, qk) = (Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.9, -0.1, 0.6), Vec3::new(-0.2, 0.7, 0.1));
    let d = (qk - pk).norm();
    let axis = Unit::new_normalize(pk1 - qk);
    let half_turn = Rotation3::from_axis_angle(&axis, PI);
    let oracle = qk + half_turn * (pk1 - pk);
    let got = trapezoid_step(&pk, &pk1, &qk, d).unwrap();
    assert!((got - oracle).norm() < 1e-14);
}

#[test]
fn direction_ode_matches_the_angle_ode() {
    let (a, b, lambda) = (1.5, 1.0, 0.7);
    let c = make_curve(&Shape::Ellipse { a, b }, 2048).unwrap();
    // alpha' = kappa - sin(alpha) / l in arc length; the ellipse starts at
    // (a, 0) with tangent (0, 1) at t = 0 and t = 2 pi.
    let rhs = |t: f64, alpha: f64| {
        let (s, k, _) = ellipse_local(a, b, t);
        s * (k - alpha.sin() / lambda)
    };
    let steps = 20_000;
    let h = TAU / steps as f64;
    for e_angle in [0.3, 1.9, -2.4] {
        let mut alpha = FRAC_PI_2 - e_angle;
        for i in 0..steps {
            let t = i as f64 * h;
            let k1 = rhs(t, alpha);
            let k2 = rhs(t + h / 2.0, alpha + h / 2.0 * k1);
            let k3 = rhs(t + h / 2.0, alpha + h / 2.0 * k2);
            let k4 = rhs(t + h, alpha + h * k3);
            alpha += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let end = FRAC_PI_2 - alpha;
        let oracle = Vec3::new(end.cos(), end.sin(), 0.0);
        let got = integrate_direction(&c, lambda, Vec3::new(e_angle.cos(), e_angle.sin(), 0.0)).unwrap().end();
        assert!((got - oracle).norm() < 1e-7, "start {e_angle}: gap {:.2e}", (got - oracle).norm());
    }
}

#[test]
fn discrete_partners_of_inscribed_polygons_converge_to_the_smooth_partner() {
    let shape = Shape::Ellipse { a: 1.3, b: 1.0 };
    let lambda = 0.4;
    let fine = make_curve(&shape, 4096).unwrap();
    let smooth = bicycle_partner(&fine, lambda, 0).unwrap();
    let mut errors = Vec::new();
    for n in [64, 128, 256, 512] {
        let c = make_curve(&shape, n).unwrap();
        let p = Polygon::from(&c);
        let d = 2.0 * lambda;
        let m = discrete_monodromy(&p, d, Exec::Parallel).unwrap();
        let q1 = closing_starts(&p, &m, d)[0];
        let t = transform_polygon(&p, q1, d).unwrap();
        assert!(t.closure_defect < 1e-7);
        // Sample 0 of both curves sits at the same front point.
        errors.push((t.q[0] - smooth.point(0)).norm());
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0] / 3.5, "{errors:?}");
    }
    assert!(errors[3] < 1e-5, "{errors:?}");
}

#[test]
fn cusped_rear_tracks_keep_the_forms() {
    let src = CurveSource::Shape(Shape::Ellipse { a: 2.0, b: 1.0 });
    let r = theorems::bisymp(&src, 1024, 1.3, 20, 5).unwrap();
    assert_eq!(r.pass, Some(true), "{:?}", r.failures());
    let cusps = r.residuals.iter().find(|x| x.name == "cusps").map(|x| x.value).unwrap_or(0.0);
    assert!(cusps > 0.0, "no cusps recorded");
}

#[test]
fn planted_violations_fail() {
    let perturbed = CurveSource::Shape(Shape::fourier(4, 0.05));
    let grid = theorems::default_grid(8);
    let honest = theorems::mono_conjugacy(&perturbed, 1024, 0.4, &grid, None).unwrap();
    assert_eq!(honest.pass, Some(true), "{:?}", honest.failures());
    let planted = theorems::mono_conjugacy(&perturbed, 1024, 0.4, &grid, Some(1e-3)).unwrap();
    assert_eq!(planted.pass, Some(false));

    let ellipse = CurveSource::Shape(Shape::Ellipse { a: 2.0, b: 1.0 });
    for d in [1.0, 2.0, 3.0] {
        assert_eq!(theorems::zindler(&ellipse, 512, d).unwrap().pass, Some(false), "chord {d}");
    }
}
