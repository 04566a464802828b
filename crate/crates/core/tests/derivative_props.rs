use std::f64::consts::TAU;

use explab_core::derivatives::{param_derivative_closed, param_derivative_recursive, DerivativeError};
use explab_core::orbit::EscapePolicy;
use explab_core::{build_ledger, Complex, Param};
use proptest::prelude::*;

fn square_param() -> impl Strategy<Value = Param> {
    (-3.0f64..3.0, -3.0f64..3.0)
        .prop_filter("lambda != 0", |(re, im)| re.hypot(*im) > 1e-6)
        .prop_map(|(re, im)| Param::from_parts(re, im).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn recursion_matches_closed_form(lam in square_param()) {
        let ledger = build_ledger(lam, &EscapePolicy::new(50.0, 100).unwrap());
        for n in 1..=ledger.truncated_at {
            let rec = param_derivative_recursive(&ledger, n).unwrap();
            let closed = param_derivative_closed(&ledger, n).unwrap();
            prop_assert!(rec.rel_diff(closed) < 1e-10, "lambda {} n {}: {:?} vs {:?}", lam.value(), n, rec, closed);
        }
    }

    #[test]
    fn log_consistency(lam in square_param()) {
        let ledger = build_ledger(lam, &EscapePolicy::new(50.0, 8).unwrap());
        let mut product = 1.0f64;
        for n in 1..=ledger.truncated_at {
            let z = ledger.entries[n - 1].zeta;
            product *= lam.modulus() * z.re.exp();
            if product.is_normal() {
                let logged = ledger.entries[n].log_mag_d.exp();
                prop_assert!((logged - product).abs() <= 1e-10 * product, "n {}: {} vs {}", n, logged, product);
            }
        }
    }
}

/// The float parameter `2 pi i` is not exactly `2 pi i`, so its singular
/// orbit leaves the fixed point by about `1.5e-15 (2 pi)^(n - 2)`. The
/// per-step growth is `log 2 pi` to 1e-12 while that drift stays below 1e-12,
/// and always equals the chain-rule factor `log|lambda| + Re zeta_(n-1)`.
#[test]
fn growth_bound_at_two_pi_i() {
    let lam = Param::from_parts(0.0, TAU).unwrap();
    let ledger = build_ledger(lam, &EscapePolicy::new(50.0, 12).unwrap());
    for n in 1..=12 {
        let inc = ledger.entries[n].log_mag_d - ledger.entries[n - 1].log_mag_d;
        let factor = lam.ln_modulus() + ledger.entries[n - 1].zeta.re;
        assert!((inc - factor).abs() < 1e-14, "n {n}: {inc} vs {factor}");
        if n <= 6 {
            assert!((inc - TAU.ln()).abs() < 1e-12, "n {n}: {inc}");
        }
    }
}

#[test]
fn levin_constant_for_one() {
    let ledger = build_ledger(Param::from_parts(1.0, 0.0).unwrap(), &EscapePolicy::new(50.0, 10).unwrap());
    let est = explab_core::derivatives::levin_estimate(&ledger, 1e-9);
    assert!((est.value - Complex::new(2.392_155_089_286_63, 0.0)).norm() < 1e-12, "{}", est.value);
}

#[test]
fn index_past_truncation_is_an_error() {
    let ledger = build_ledger(Param::from_parts(1.0, 0.0).unwrap(), &EscapePolicy::default());
    assert!(matches!(
        param_derivative_closed(&ledger, ledger.truncated_at + 1),
        Err(DerivativeError::OutOfRange { .. })
    ));
}
