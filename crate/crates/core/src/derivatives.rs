//! Phase and parameter derivatives along the singular orbit.
//!
//! `Df^j(0)` is stored as `(log |.|, arg)`; the summability partial sums
//! `S_j = sum_{k<=j} 1 / Df^k(0)` are ordinary complex numbers because their
//! terms decay for the parameters of interest. The parameter derivative of
//! `zeta_n(lambda) = f^n(0)` satisfies
//!
//! ```text
//! zeta'_n = Df^n(0) * S_{n-1} / lambda
//! ```
//!
//! so the transversality ratio `T_n = zeta'_n / Df^n(0)` is `S_{n-1} / lambda`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{step, CycleWatch, EscapePolicy, OrbitRecord, OrbitStatus, Param};
use crate::orbit::{CYCLE_SUSPECT_TOL, MAX_PERIOD};
use crate::scaled::ScaledComplex;
use crate::{is_finite, reduce_angle, unit, Complex};

/// Relative tolerance between the recursive and closed-form `zeta'_n`.
pub const CROSS_CHECK_TOL: f64 = 1e-10;
/// Terms `1 / Df^j(0)` with `log |Df^j(0)|` above this are treated as zero.
pub const NEGLIGIBLE_LOG_MAG: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DerivativeError {
    #[error("index {n} is beyond the ledger (truncated at {truncated_at})")]
    OutOfRange { n: usize, truncated_at: usize },
    #[error("transversality ratio needs n >= 1")]
    ZeroIndex,
    #[error("recursive and closed-form derivative disagree at n = {n} (relative {rel:e})")]
    Disagreement { n: usize, rel: f64 },
    #[error("no expansion found for block sizes up to {k_max}")]
    NoExpansionFound { k_max: usize },
    #[error("orbit too short: need {needed} points, have {have}")]
    InsufficientOrbit { needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub index: usize,
    pub zeta: Complex,
    /// `log |Df^j(0)|`.
    pub log_mag_d: f64,
    /// `arg Df^j(0)` in `[0, 2pi)`.
    pub arg_d: f64,
    /// `S_j`.
    pub s: Complex,
    /// `T_j = zeta'_j / Df^j(0)`; zero at `j = 0`.
    pub t: Complex,
}

impl LedgerEntry {
    pub fn phase_derivative(&self) -> ScaledComplex {
        ScaledComplex::new(self.log_mag_d, self.arg_d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeLedger {
    pub lambda: Param,
    pub entries: Vec<LedgerEntry>,
    pub truncated_at: usize,
    pub status: OrbitStatus,
    /// Number of terms dropped from `S` because they are below `e^-700`.
    pub terms_zeroed: usize,
    /// Set when the next term of `S` would not have been representable.
    pub sum_overflow: bool,
}

/// Log-magnitude and argument of `f'(z) = lambda e^z`.
#[inline]
fn log_alpha(lambda: Param, z: Complex) -> (f64, f64) {
    (lambda.ln_modulus() + z.re, lambda.rotation(z.im))
}

/// Builds the ledger for `lambda`, iterating until `policy.max_iter` or escape.
///
/// Unlike [`crate::orbit::singular_orbit`] the iteration does not stop at a
/// suspected cycle (the summability sum needs the full budget); the first
/// suspicion is still reported in `status`.
pub fn build_ledger(lambda: Param, policy: &EscapePolicy) -> DerivativeLedger {
    let zero = Complex::new(0.0, 0.0);
    let mut entries = Vec::with_capacity(policy.max_iter.min(4096) + 1);
    entries.push(LedgerEntry {
        index: 0,
        zeta: zero,
        log_mag_d: 0.0,
        arg_d: 0.0,
        s: Complex::new(1.0, 0.0),
        t: zero,
    });
    let mut watch = CycleWatch::new(CYCLE_SUSPECT_TOL, MAX_PERIOD);
    watch.push(zero);
    let mut status = OrbitStatus::Completed;
    let mut suspected = None;
    let mut terms_zeroed = 0;
    let mut sum_overflow = false;

    for n in 1..=policy.max_iter {
        let prev = entries[n - 1];
        let Ok(z) = step(lambda, prev.zeta, policy) else {
            status = OrbitStatus::Escaped { at_index: n - 1 };
            break;
        };
        let (la, aa) = log_alpha(lambda, prev.zeta);
        let log_mag_d = prev.log_mag_d + la;
        let arg_d = reduce_angle(prev.arg_d + aa);
        let term = if log_mag_d > NEGLIGIBLE_LOG_MAG {
            terms_zeroed += 1;
            zero
        } else if log_mag_d < -NEGLIGIBLE_LOG_MAG {
            sum_overflow = true;
            break;
        } else {
            unit(-arg_d) * (-log_mag_d).exp()
        };
        let s = prev.s + term;
        if !is_finite(s) {
            sum_overflow = true;
            break;
        }
        entries.push(LedgerEntry {
            index: n,
            zeta: z,
            log_mag_d,
            arg_d,
            s,
            t: prev.s / lambda.value(),
        });
        if z.re > policy.re_threshold {
            status = OrbitStatus::Escaped { at_index: n };
            break;
        }
        if suspected.is_none() {
            if let Some(period) = watch.push(z) {
                suspected = Some(OrbitStatus::CycleSuspected { period, at_index: n });
            }
        }
    }
    if status == OrbitStatus::Completed {
        if let Some(s) = suspected {
            status = s;
        }
    }
    DerivativeLedger {
        lambda,
        truncated_at: entries.len() - 1,
        entries,
        status,
        terms_zeroed,
        sum_overflow,
    }
}

impl DerivativeLedger {
    pub fn entry(&self, n: usize) -> Result<&LedgerEntry, DerivativeError> {
        self.entries.get(n).ok_or(DerivativeError::OutOfRange {
            n,
            truncated_at: self.truncated_at,
        })
    }

    /// CSV rows `n,Re_zeta,Im_zeta,log_mag_D,arg_D,Re_S,Im_S,Re_T,Im_T`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,Re_zeta,Im_zeta,log_mag_D,arg_D,Re_S,Im_S,Re_T,Im_T")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                e.index, e.zeta.re, e.zeta.im, e.log_mag_d, e.arg_d, e.s.re, e.s.im, e.t.re, e.t.im
            )?;
        }
        Ok(())
    }
}

/// `zeta'_n` by the forward recursion `zeta'_{j+1} = f'(zeta_j) zeta'_j + e^{zeta_j}`.
pub fn param_derivative_recursive(ledger: &DerivativeLedger, n: usize) -> Result<ScaledComplex, DerivativeError> {
    ledger.entry(n)?;
    if n == 0 {
        return Ok(ScaledComplex::ZERO);
    }
    let mut d = ScaledComplex::ONE;
    for e in &ledger.entries[1..n] {
        let (la, aa) = log_alpha(ledger.lambda, e.zeta);
        let alpha = ScaledComplex::new(la, aa);
        let rho = ScaledComplex::new(e.zeta.re, e.zeta.im);
        d = alpha.mul(d).add(rho);
    }
    Ok(d)
}

/// `zeta'_n = T_n * Df^n(0)`.
pub fn param_derivative_closed(ledger: &DerivativeLedger, n: usize) -> Result<ScaledComplex, DerivativeError> {
    let e = ledger.entry(n)?;
    if n == 1 {
        // (1 / lambda) * lambda, without the rounding
        return Ok(ScaledComplex::ONE);
    }
    Ok(ScaledComplex::from(e.t).mul(e.phase_derivative()))
}

/// `zeta'_n`, computed both ways and cross-checked to [`CROSS_CHECK_TOL`].
/// Returns the closed-form value.
pub fn param_derivative(ledger: &DerivativeLedger, n: usize) -> Result<ScaledComplex, DerivativeError> {
    let closed = param_derivative_closed(ledger, n)?;
    let recursive = param_derivative_recursive(ledger, n)?;
    let rel = closed.rel_diff(recursive);
    if !(rel <= CROSS_CHECK_TOL) {
        return Err(DerivativeError::Disagreement { n, rel });
    }
    Ok(closed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevinEstimate {
    pub value: Complex,
    pub terms_used: usize,
    /// Geometric tail bound; `f64::MAX` when the last ratios do not decay.
    pub tail_bound: f64,
    pub converged: bool,
    /// The last term is larger than its predecessor.
    pub diverging: bool,
}

/// Estimate of `L = lim S_n`.
///
/// For an escaped ledger the phase derivative one step past the escape is
/// still known (`Re zeta_k` is finite), so that term closes the sum.
pub fn levin_estimate(ledger: &DerivativeLedger, tol: f64) -> LevinEstimate {
    let e = &ledger.entries;
    let n = ledger.truncated_at;
    let mut log_mags: Vec<f64> = e.iter().map(|x| x.log_mag_d).collect();
    let mut sums: Vec<Complex> = e.iter().map(|x| x.s).collect();
    if let OrbitStatus::Escaped { at_index } = ledger.status {
        if at_index == n {
            let (la, aa) = log_alpha(ledger.lambda, e[n].zeta);
            let lm = e[n].log_mag_d + la;
            let term = if lm > NEGLIGIBLE_LOG_MAG {
                Complex::new(0.0, 0.0)
            } else {
                unit(-reduce_angle(e[n].arg_d + aa)) * (-lm).exp()
            };
            log_mags.push(lm);
            sums.push(e[n].s + term);
        }
    }
    let last = log_mags.len() - 1;
    let value = sums[last];
    let ratio = |i: usize| (log_mags[i - 1] - log_mags[i]).exp();
    let diverging = last >= 1 && log_mags[last] < log_mags[last - 1];

    let mut tail_bound = f64::MAX;
    if last >= 3 && (last - 2..=last).all(|i| ratio(i) < 1.0) {
        let q = ratio(last);
        let log_tail = -log_mags[last] + (q / (1.0 - q)).ln();
        tail_bound = if log_tail < -745.0 { 0.0 } else { log_tail.exp().min(f64::MAX) };
    }
    let last_diff = if last >= 1 { (sums[last] - sums[last - 1]).norm() } else { f64::MAX };
    let converged = tail_bound < tol && last_diff < tol && value.norm() > 0.0;
    LevinEstimate {
        value,
        terms_used: last + 1,
        tail_bound,
        converged,
        diverging,
    }
}

/// `T_n = S_{n-1} / lambda`.
pub fn transversality_ratio(ledger: &DerivativeLedger, n: usize) -> Result<Complex, DerivativeError> {
    if n == 0 {
        return Err(DerivativeError::ZeroIndex);
    }
    Ok(ledger.entry(n)?.t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEstimate {
    pub n_tilde: usize,
    pub gamma_tilde: f64,
    pub samples_checked: usize,
    /// `C_1` in `|Df^n(0)| >= C_1 gamma_1^n`.
    pub c1: f64,
    pub gamma1: f64,
}

impl ExpansionEstimate {
    /// `log(C_1 gamma_1^n)`.
    pub fn log_lower_bound(&self, n: usize) -> f64 {
        self.c1.ln() + n as f64 * self.gamma1.ln()
    }
}

/// Smallest block size `k <= k_max` whose derivative is expanding at every
/// sampled point of the truncated post-singular orbit.
///
/// Records ending in a suspected cycle are extended periodically.
pub fn expansion_constants(record: &OrbitRecord, k_max: usize) -> Result<ExpansionEstimate, DerivativeError> {
    let last = record.last_index();
    let period = match record.status {
        OrbitStatus::CycleSuspected { period, .. } => Some(period),
        _ => None,
    };
    if period.is_none() && record.points.len() < k_max + 2 {
        return Err(DerivativeError::InsufficientOrbit {
            needed: k_max + 2,
            have: record.points.len(),
        });
    }
    let lambda = record.lambda;
    let log_factor = |i: usize| -> Option<f64> {
        let z = if i <= last {
            record.points[i].value
        } else {
            let p = period?;
            record.points[last + 1 - p + (i - last - 1) % p].value
        };
        Some(lambda.ln_modulus() + z.re)
    };

    for k in 1..=k_max {
        let mut min = f64::INFINITY;
        let mut checked = 0;
        for j in 0..=last {
            let Some(sum) = (j..j + k).map(log_factor).sum::<Option<f64>>() else {
                break;
            };
            min = min.min(sum);
            checked += 1;
        }
        if checked > 0 && min > 0.0 {
            let gamma_tilde = min.exp();
            let mut prefix = 0.0f64;
            let mut min_prefix = 0.0f64;
            for j in 0..k {
                min_prefix = min_prefix.min(prefix);
                prefix += log_factor(j).unwrap_or(0.0);
            }
            return Ok(ExpansionEstimate {
                n_tilde: k,
                gamma_tilde,
                samples_checked: checked,
                c1: (min_prefix - min).exp(),
                gamma1: gamma_tilde.powf(1.0 / k as f64),
            });
        }
    }
    Err(DerivativeError::NoExpansionFound { k_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::singular_orbit;
    use crate::TAU;
    use std::f64::consts::E;

    fn p(re: f64, im: f64) -> Param {
        Param::from_parts(re, im).unwrap()
    }

    #[test]
    fn initial_entry() {
        let l = build_ledger(p(0.3, -1.2), &EscapePolicy::default());
        let e0 = l.entries[0];
        assert_eq!((e0.log_mag_d, e0.arg_d), (0.0, 0.0));
        assert_eq!(e0.s, Complex::new(1.0, 0.0));
    }

    #[test]
    fn t_one_is_reciprocal_lambda() {
        for lam in [p(1.0, 0.0), p(-0.4, 2.2), p(0.0, TAU)] {
            let l = build_ledger(lam, &EscapePolicy::default());
            let t1 = transversality_ratio(&l, 1).unwrap();
            assert!((t1 - 1.0 / lam.value()).norm() < 1e-15);
            let d1 = param_derivative(&l, 1).unwrap().to_complex().unwrap();
            assert!((d1 - Complex::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn second_derivative_at_one() {
        let l = build_ledger(p(1.0, 0.0), &EscapePolicy::default());
        let d2 = param_derivative(&l, 2).unwrap().to_complex().unwrap();
        assert!((d2.re - 2.0 * E).abs() < 1e-14 && d2.im.abs() < 1e-14);
    }

    #[test]
    fn two_pi_i_third_derivative_closed_form() {
        let lam = Complex::new(0.0, TAU);
        let l = build_ledger(p(0.0, TAU), &EscapePolicy::default());
        let expect = lam * lam * (1.0 + 1.0 / lam + 1.0 / (lam * lam));
        let d3 = param_derivative(&l, 3).unwrap().to_complex().unwrap();
        assert!((d3 - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn levin_for_one() {
        let l = build_ledger(p(1.0, 0.0), &EscapePolicy::default());
        assert_eq!(l.status, OrbitStatus::Escaped { at_index: 4 });
        let est = levin_estimate(&l, 1e-9);
        assert!(est.converged, "{est:?}");
        // mpmath partial-sum oracle, 30 digits
        assert!((est.value.re - 2.392_155_089_286_628_5).abs() < 1e-14);
        assert_eq!(est.value.im, 0.0);
    }

    #[test]
    fn levin_diverges_for_attracting() {
        let l = build_ledger(p(0.2, 0.0), &EscapePolicy::default());
        let est = levin_estimate(&l, 1e-9);
        assert!(!est.converged);
        assert!(est.diverging);
        assert!(l.entries.iter().all(|e| is_finite(e.s) && is_finite(e.t)));
    }

    #[test]
    fn out_of_range_rejected() {
        let l = build_ledger(p(1.0, 0.0), &EscapePolicy::default());
        assert!(matches!(param_derivative(&l, 9), Err(DerivativeError::OutOfRange { .. })));
        assert_eq!(transversality_ratio(&l, 0), Err(DerivativeError::ZeroIndex));
    }

    #[test]
    fn expansion_examples() {
        let pol = EscapePolicy::default();
        let est = expansion_constants(&singular_orbit(p(0.0, TAU), &pol), 4).unwrap();
        assert_eq!(est.n_tilde, 1);
        assert!((est.gamma_tilde - TAU).abs() < 1e-12);

        let est = expansion_constants(&singular_orbit(p(1.0, 0.0), &pol), 3).unwrap();
        assert_eq!(est.n_tilde, 2);
        assert!((est.gamma_tilde - E).abs() < 1e-12);
        assert!((est.c1 - 1.0 / E).abs() < 1e-12);
        assert!((est.gamma1 - E.sqrt()).abs() < 1e-12);

        let r = expansion_constants(&singular_orbit(p(0.2, 0.0), &pol), 8);
        assert_eq!(r, Err(DerivativeError::NoExpansionFound { k_max: 8 }));
    }

    #[test]
    fn csv_header_and_rows() {
        let l = build_ledger(p(1.0, 0.0), &EscapePolicy::default());
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,Re_zeta,Im_zeta,log_mag_D,arg_D,Re_S,Im_S,Re_T,Im_T"));
        assert_eq!(lines.count(), l.entries.len());
    }
}
