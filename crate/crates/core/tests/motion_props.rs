use std::f64::consts::TAU;

use explab_core::derivatives::expansion_constants;
use explab_core::motion::{distortion_report, time_to_scale, MotionError};
use explab_core::orbit::{singular_orbit, EscapePolicy};
use explab_core::{track_point, verify_conjugacy, Complex, Param};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_pi_i() -> Param {
    Param::from_parts(0.0, TAU).unwrap()
}

/// Repelling fixed points of `2 pi i e^w`, one near `ln k + 2 pi i k`.
fn fixed_points(count: usize) -> Vec<Complex> {
    let lam = two_pi_i().value();
    (1..=count)
        .map(|k| {
            let mut w = Complex::new((k as f64).ln(), TAU * k as f64);
            for _ in 0..60 {
                let e = lam * w.exp();
                w -= (e - w) / (e - 1.0);
            }
            w
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn motion_is_injective(eps_re in -0.01f64..0.01, eps_im in -0.01f64..0.01) {
        let l0 = two_pi_i();
        let l1 = Param::new(l0.value() * Complex::new(1.0 + eps_re, eps_im)).unwrap();
        let base = fixed_points(4);
        let tracked: Vec<Complex> = base
            .iter()
            .map(|&z| {
                let t = track_point(l0, l1, z, 30, 8).unwrap();
                assert!(verify_conjugacy(&t).unwrap() < 1e-8);
                t.tracked_point
            })
            .collect();
        for i in 0..tracked.len() {
            for j in i + 1..tracked.len() {
                prop_assert!((tracked[i] - tracked[j]).norm() > 0.0);
            }
        }
    }
}

#[test]
fn non_orbit_points_are_rejected() {
    let l0 = two_pi_i();
    let l1 = Param::new(l0.value() * 1.01).unwrap();
    assert!(matches!(
        track_point(l0, l1, Complex::new(0.3, 0.2), 30, 8),
        Err(MotionError::PreconditionViolation(_))
    ));
    assert!(matches!(
        track_point(l0, l1, Complex::new(0.0, 0.0), 30, 8),
        Err(MotionError::PreconditionViolation(_))
    ));
}

/// `|g^n z - g^n w| >= C gamma^n |z - w|` for pairs that stay `delta`-close
/// to the seed orbit, with `(C, gamma)` measured on that orbit.
#[test]
fn expansion_separation() {
    let l0 = two_pi_i();
    let est = expansion_constants(&singular_orbit(l0, &EscapePolicy::default()), 8).unwrap();
    let delta = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..500 {
        let lam = Param::new(l0.value() + Complex::from_polar(1e-6 * rng.gen::<f64>(), rng.gen_range(0.0..TAU))).unwrap();
        let mut z = l0.value() + Complex::from_polar(1e-7 * rng.gen::<f64>(), rng.gen_range(0.0..TAU));
        let mut w = z + Complex::from_polar(1e-9, rng.gen_range(0.0..TAU));
        let d0 = (z - w).norm();
        for n in 1..=30 {
            z = lam.value() * z.exp();
            w = lam.value() * w.exp();
            if (z - l0.value()).norm() > delta || (w - l0.value()).norm() > delta {
                break;
            }
            let bound = (est.log_lower_bound(n) + d0.ln()).exp();
            assert!((z - w).norm() >= bound, "n {n}: {} < {bound}", (z - w).norm());
            checked += 1;
        }
    }
    assert!(checked > 1000, "only {checked} pairs checked");
}

/// Distortion grows at most linearly with the measured orbit separation
/// between consecutive rungs of the radius ladder.
#[test]
fn distortion_tracks_separation() {
    let l0 = two_pi_i();
    let radii = [1e-3, 1e-4, 1e-5];
    let per_rung: Vec<_> = radii
        .iter()
        .map(|&r| distortion_report(l0, r, time_to_scale(l0, r, 0.25).unwrap(), 400, 42))
        .collect();
    let fixed: Vec<_> = radii.iter().map(|&r| distortion_report(l0, r, 4, 400, 42)).collect();
    for ladder in [per_rung, fixed] {
        for pair in ladder.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(a.pairs_excluded < a.pairs_sampled && b.pairs_excluded < b.pairs_sampled);
            let dev_ratio = b.sup_ratio_dev / a.sup_ratio_dev;
            let sep_ratio = b.max_separation / a.max_separation;
            assert!(dev_ratio <= 10.0 * sep_ratio, "r {:e} -> {:e}: dev x{dev_ratio:.3}, separation x{sep_ratio:.3}", a.radius, b.radius);
        }
    }
}

#[test]
fn scale_is_reached_faster_for_larger_disks() {
    let l0 = two_pi_i();
    let n: Vec<usize> = [1e-2, 1e-4, 1e-6].iter().map(|&r| time_to_scale(l0, r, 0.25).unwrap()).collect();
    assert!(n.windows(2).all(|w| w[0] <= w[1]), "{n:?}");
}
