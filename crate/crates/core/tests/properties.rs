use bikelab::discrete::{closing_starts, discrete_monodromy, transform_polygon, trapezoid_step};
use bikelab::experiments::theorems::random_polygon;
use bikelab::flows::{evolve, stable_step, Field, FlowSpec};
use bikelab::frame::frenet_data;
use bikelab::invariants::{area_centroid, filament_integrals, omega_form, Omega_form};
use bikelab::resample::{resample_arclength, PeriodicSpline};
use bikelab::smooth::{bicycle_partner, monodromy, rear_track};
use bikelab::{make_curve, BikeError, Exec, SampledCurve, Shape, Vec3, VectorField};
use nalgebra::Rotation3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use std::f64::consts::TAU;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn fourier(seed: u64, dim: usize, n: usize) -> SampledCurve {
    make_curve(&Shape::Fourier { radius: 1.0, amp: 0.08, modes: 4, seed, dim }, n).unwrap()
}

fn field(c: &SampledCurve, seed: u64) -> VectorField {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, Vec3)> = (1..5)
        .map(|k| {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (k as f64, rng.gen_range(0.0..TAU), v)
        })
        .collect();
    let n = c.len();
    let vs = (0..n)
        .map(|j| {
            let t = TAU * j as f64 / n as f64;
            let v: Vec3 = modes.iter().map(|(k, ph, v)| v * (k * t + ph).sin()).sum();
            if c.dim() == 2 { Vec3::new(v.x, v.y, 0.0) } else { v }
        })
        .collect();
    VectorField::new(c, vs).unwrap()
}

proptest! {
    #[test]
    fn trapezoid_step_keeps_lengths_and_plane(pk in vec3(), edge in vec3(), dir in vec3(), d in 0.1..2.0f64, planar in any::<bool>()) {
        let flat = |v: Vec3| if planar { Vec3::new(v.x, v.y, 0.0) } else { v };
        let (pk, edge, dir) = (flat(pk), flat(edge), flat(dir));
        prop_assume!(edge.norm() > 1e-2 && dir.norm() > 1e-2);
        let pk1 = pk + edge;
        let qk = pk + dir.normalize() * d;
        // Keep clear of the degenerate line Q_k = P_{k+1}.
        prop_assume!((pk1 - qk).norm() > 1e-2);
        let qk1 = trapezoid_step(&pk, &pk1, &qk, d).unwrap();
        let scale = 1.0 + pk.norm() + pk1.norm() + qk.norm();
        prop_assert!(((pk1 - qk1).norm() - d).abs() < 1e-12 * scale);
        prop_assert!(((qk1 - qk).norm() - edge.norm()).abs() < 1e-12 * scale);
        let volume = (qk - pk).cross(&edge).dot(&(qk1 - pk));
        prop_assert!(volume.abs() < 1e-12 * scale.powi(3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn polygon_fixed_points_close_and_keep_perimeter(seed in any::<u64>(), n in 8usize..40, d in 1.0..3.0f64, spatial in any::<bool>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, n, if spatial { 3 } else { 2 }).unwrap();
        let m = discrete_monodromy(&p, d, Exec::Sequential).unwrap();
        prop_assert!(m.residual() < 1e-8, "residual {}", m.residual());
        for q1 in closing_starts(&p, &m, d) {
            let t = transform_polygon(&p, q1, d).unwrap();
            prop_assert!(t.closure_defect < 1e-7, "defect {}", t.closure_defect);
            let q = t.polygon(p.dim()).unwrap();
            prop_assert!((q.perimeter() - p.perimeter()).abs() < 1e-7 * p.perimeter());
        }
    }

    #[test]
    fn forms_vanish_on_the_diagonal_and_are_antisymmetric(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let c = fourier(seed, 3, 128);
        let (u, v) = (field(&c, a), field(&c, b));
        prop_assert!(omega_form(&c, &u, &u).unwrap().abs() < 1e-12);
        prop_assert_eq!(Omega_form(&c, &u, &u).unwrap(), 0.0);
        let (uv, vu) = (omega_form(&c, &u, &v).unwrap(), omega_form(&c, &v, &u).unwrap());
        prop_assert!((uv + vu).abs() < 1e-11 * (1.0 + uv.abs()));
        let (uv, vu) = (Omega_form(&c, &u, &v).unwrap(), Omega_form(&c, &v, &u).unwrap());
        prop_assert!((uv + vu).abs() < 1e-11 * (1.0 + uv.abs()));
    }

    #[test]
    fn integrals_ignore_rigid_motion_and_relabeling(seed in any::<u64>(), angles in (0.0..TAU, 0.0..TAU, 0.0..TAU), shift in vec3(), k in 0usize..256, spatial in any::<bool>()) {
        let dim = if spatial { 3 } else { 2 };
        let c = fourier(seed, dim, 256);
        let rot = if spatial {
            Rotation3::from_euler_angles(angles.0, angles.1, angles.2)
        } else {
            Rotation3::from_euler_angles(0.0, 0.0, angles.0)
        };
        let shift = if spatial { shift } else { Vec3::new(shift.x, shift.y, 0.0) };
        let moved = c.rotated(&rot).unwrap().translated(shift).cyclic_shift(k);
        let (f, g) = (filament_integrals(&c).as_array(), filament_integrals(&moved).as_array());
        for i in 0..5 {
            prop_assert!((f[i] - g[i]).abs() < 1e-9 * f[i].abs().max(1.0), "F{}: {} vs {}", i + 1, f[i], g[i]);
        }
        // A is a bivector: translation and relabeling leave it alone.
        let a0 = area_centroid(&c).a;
        let a1 = area_centroid(&c.translated(shift).cyclic_shift(k)).a;
        for (r0, r1) in a0.iter().zip(&a1) {
            for (x, y) in r0.iter().zip(r1) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
        if !spatial {
            prop_assert!((area_centroid(&moved).a[0][1] - a0[0][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn doubling_samples_settles_the_integrals(seed in any::<u64>(), spatial in any::<bool>()) {
        let dim = if spatial { 3 } else { 2 };
        let (f, g) = (filament_integrals(&fourier(seed, dim, 1024)).as_array(), filament_integrals(&fourier(seed, dim, 2048)).as_array());
        for i in 0..5 {
            prop_assert!((f[i] - g[i]).abs() < 1e-8, "F{}: {} vs {}", i + 1, f[i], g[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn partner_then_opposite_branch_is_the_identity(seed in any::<u64>(), l in 0.2..0.5f64, branch in 0usize..2, spatial in any::<bool>()) {
        let c = fourier(seed, if spatial { 3 } else { 2 }, 512);
        let p = bicycle_partner(&c, l, branch).unwrap();
        let back = bicycle_partner(&p, l, 1 - branch).unwrap();
        prop_assert!(back.max_distance(&c) < 1e-6, "{}", back.max_distance(&c));
    }

    #[test]
    fn planar_monodromy_routes_agree(seed in any::<u64>(), l in 0.5..2.0f64) {
        let c = fourier(seed, 2, 1024);
        let m = monodromy(&c, l).unwrap();
        if let Some(gap) = m.route_gap {
            prop_assert!(gap < 1e-7, "route gap {gap}");
        }
    }

    #[test]
    fn coorientation_alternates_across_cusps(a in 1.6..2.4f64, l in 1.1..1.5f64) {
        let c = make_curve(&Shape::Ellipse { a, b: 1.0 }, 1024).unwrap();
        let r = rear_track(&c, l, 0);
        // Long bicycles on fat ellipses have elliptic monodromy and no rear track.
        prop_assume!(!matches!(r, Err(BikeError::NoPeriodicSolution(_))));
        let r = r.unwrap();
        prop_assert_eq!(r.cusps.len() % 2, 0);
        if r.cusps.len() > 1 {
            for k in 0..r.arcs.len() {
                prop_assert_eq!(r.arcs[k].sign, -r.arcs[(k + 1) % r.arcs.len()].sign);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn smooth_monodromy_fit_is_exact(seed in any::<u64>(), l in 0.8..2.0f64, spatial in any::<bool>()) {
        let c = fourier(seed, if spatial { 3 } else { 2 }, 2048);
        let m = monodromy(&c, l).unwrap();
        if let Some(r) = m.residual() {
            prop_assert!(r < 1e-8, "residual {r}");
        }
    }
}

#[test]
fn resampling_perimeter_converges_at_second_order_or_better() {
    let trig = Shape::Ellipse { a: 2.0, b: 0.5 }.trig().unwrap();
    let exact = make_curve(&Shape::Ellipse { a: 2.0, b: 0.5 }, 4096).unwrap().length();
    let errors: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&m| {
            let r = resample_arclength(&trig.sample_parameter(m).unwrap(), m).unwrap();
            (PeriodicSpline::through(&r).length() - exact).abs()
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 3.5, "{errors:?}");
    }
}

#[test]
fn frenet_frame_is_consistent_at_second_order() {
    for seed in 0..4 {
        let mut scaled = Vec::new();
        for n in [128, 256, 512] {
            let f = frenet_data(&fourier(seed, 3, n));
            let dt = f.ds(&f.t);
            let sup = (0..n).map(|j| (dt[j] - f.n[j] * f.kappa[j]).norm()).fold(0.0, f64::max);
            scaled.push(sup * (n * n) as f64);
        }
        assert!(scaled.iter().all(|&s| s < 1.0), "{scaled:?}");
    }
}

#[test]
fn halving_the_step_gains_fourth_order() {
    let c = make_curve(&Shape::TorusKnot { p: 2, q: 3, major: 2.0, minor: 0.5 }, 48).unwrap();
    let dt = 0.5 * stable_step(&c, &[0.0, 1.0, 0.0, 0.0]);
    let run = |h: f64, steps: usize| evolve(&c, &FlowSpec::new(Field::Filament, h, steps)).unwrap();
    let coarse = run(dt, 4);
    assert_eq!(coarse.substeps, 1);
    let half = run(dt / 2.0, 8);
    let reference = run(dt / 16.0, 64);
    let e1 = coarse.curve.max_distance(&reference.curve);
    let e2 = half.curve.max_distance(&reference.curve);
    assert!(e1 / e2 >= 15.0, "{e1:.3e} / {e2:.3e}");
}
