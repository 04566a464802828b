use std::f64::consts::TAU;

use explab_core::classify::detect_attracting_cycle;
use explab_core::hyperbolic::{
    certify_disk_contraction, cycle_by_iteration, propagate_disk, solve_singular_target, DiskEnclosure, TRAP_RADII,
};
use explab_core::orbit::{singular_orbit, step, EscapePolicy, MAX_RE_THRESHOLD};
use explab_core::{find_hyperbolic_near, Complex, Param, SearchStrategy};
use proptest::prelude::*;

fn param(lo: f64, hi: f64) -> impl Strategy<Value = Param> {
    (lo..hi, 0.0..TAU).prop_map(|(lm, a)| Param::new(Complex::from_polar(10f64.powf(lm), a)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Boundary samples inside the input disk map into the image disk.
    #[test]
    fn enclosure_contains_boundary_images(
        lam in param(-2.0, 1.5),
        re in -8.0f64..5.0,
        im in -20.0f64..20.0,
        log_r in -12.0f64..0.0,
    ) {
        let disk = DiskEnclosure::new(Complex::new(re, im), 10f64.powf(log_r));
        let image = propagate_disk(lam, disk).unwrap();
        let wide = EscapePolicy::new(MAX_RE_THRESHOLD, 1).unwrap();
        for k in 0..64 {
            let b = disk.center + Complex::from_polar(disk.radius, TAU * k as f64 / 64.0);
            // a rounded sample may sit just outside the disk it was drawn for
            if disk.contains(b) {
                let w = step(lam, b, &wide).unwrap();
                prop_assert!(image.contains(w), "sample {} misses by {:e}", k, (w - image.center).norm() - image.radius);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn certificates_are_sound(lam in (0.0f64..1.0, 0.0..TAU).prop_map(|(u, a)| Param::new(Complex::new(-1.0, 0.0) + Complex::from_polar(1.2 * u.sqrt(), a)).unwrap())) {
        let pol = EscapePolicy::default();
        let Ok(cycle) = detect_attracting_cycle(lam, &pol, 1e-12) else { return Ok(()) };
        for rho in TRAP_RADII {
            if let Ok(cert) = certify_disk_contraction(lam, cycle.point, cycle.period, rho) {
                prop_assert!(cert.verify());
                let it = cycle_by_iteration(lam, cert.initial.center, cert.period, 1e-10);
                prop_assert!(it.is_some_and(|c| c.multiplier.norm() < 1.0));
                // the singular orbit enters the trap
                let rec = singular_orbit(lam, &pol);
                prop_assert!(rec.values().any(|z| cert.initial.contains(z)));
            }
        }
    }

    #[test]
    fn newton_target_is_met(lam in param(-0.5, 0.8), n in 1usize..5, tre in -2.0f64..2.0, tim in -2.0f64..2.0) {
        let target = Complex::new(tre, tim);
        if let Ok(found) = solve_singular_target(lam, n, target, 1e-10, 40) {
            let rec = singular_orbit(found, &EscapePolicy::new(MAX_RE_THRESHOLD, n).unwrap());
            prop_assert!((rec.value(n).unwrap() - target).norm() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn witnesses_are_valid(
        lam in param(-0.5, 1.0),
        r in prop::sample::select(vec![0.1, 0.01]),
        scan in any::<bool>(),
    ) {
        let strategy = if scan { SearchStrategy::Scan } else { SearchStrategy::Route };
        if let Ok(w) = find_hyperbolic_near(lam, r, &EscapePolicy::default(), strategy) {
            prop_assert!((w.lambda.value() - lam.value()).norm() <= r);
            prop_assert!((w.distance_to_seed - (w.lambda.value() - lam.value()).norm()).abs() < 1e-15);
            prop_assert!(w.cycle.multiplier.norm() < 1.0 && w.cycle.period >= 1);
            if w.cycle.period == 1 {
                prop_assert!((w.cycle.multiplier - w.cycle.point).norm() < 1e-10);
            }
            if let Some(cert) = &w.certificate {
                prop_assert!(cert.verify());
                prop_assert_eq!(cert.lambda, w.lambda);
            }
        }
    }
}

#[test]
fn two_pi_i_is_never_certified() {
    let lam = Param::from_parts(0.0, TAU).unwrap();
    for m in 1..=8 {
        for rho in [0.1, 0.01] {
            assert!(certify_disk_contraction(lam, Complex::new(0.0, TAU), m, rho).is_err(), "m {m} rho {rho}");
        }
    }
}
