//! Evaluation of `f(z) = lambda * exp(z)`, its inverse branches, and the
//! orbit of the singular value `0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{is_finite, unit, Complex, TAU};

/// Default real-part threshold beyond which an orbit is declared escaped.
pub const DEFAULT_RE_THRESHOLD: f64 = 50.0;
/// Largest admissible threshold: `exp(700)` is still representable.
pub const MAX_RE_THRESHOLD: f64 = 700.0;
pub const DEFAULT_MAX_ITER: usize = 1000;
/// Two orbit points closer than this at lag `p` flag a suspected cycle.
pub const CYCLE_SUSPECT_TOL: f64 = 1e-9;
pub const MAX_PERIOD: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("lambda must be a finite non-zero complex number, got {0}")]
    InvalidParam(Complex),
    #[error("escape threshold must lie in (0, {MAX_RE_THRESHOLD}], got {0}")]
    InvalidThreshold(f64),
    #[error("max_iter must be at least 1")]
    ZeroBudget,
    #[error("0 is the omitted value of lambda * exp(z) and has no preimage")]
    OmittedValue,
    #[error("block size must be at least 1")]
    ZeroBlock,
}

/// A parameter `lambda` of the family; never zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Complex", into = "Complex")]
pub struct Param(Complex);

impl Param {
    pub fn new(value: Complex) -> Result<Self, OrbitError> {
        if !is_finite(value) || (value.re == 0.0 && value.im == 0.0) {
            return Err(OrbitError::InvalidParam(value));
        }
        Ok(Param(value))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self, OrbitError> {
        Self::new(Complex::new(re, im))
    }

    pub fn value(&self) -> Complex {
        self.0
    }

    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    pub fn ln_modulus(&self) -> f64 {
        self.0.norm().ln()
    }

    /// Argument in `[0, 2pi)`.
    pub fn arg(&self) -> f64 {
        crate::reduce_angle(self.0.arg())
    }

    /// `arg(lambda) + Im z`, reduced into `[0, 2pi)`. The imaginary part is
    /// reduced first so that huge `Im z` does not swallow `arg(lambda)`.
    pub(crate) fn rotation(&self, im: f64) -> f64 {
        crate::reduce_angle(self.arg() + im.rem_euclid(TAU))
    }
}

impl TryFrom<Complex> for Param {
    type Error = OrbitError;
    fn try_from(value: Complex) -> Result<Self, Self::Error> {
        Param::new(value)
    }
}

impl From<Param> for Complex {
    fn from(p: Param) -> Complex {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct EscapePolicy {
    pub re_threshold: f64,
    pub max_iter: usize,
}

#[derive(Deserialize)]
struct RawPolicy {
    re_threshold: f64,
    max_iter: usize,
}

impl TryFrom<RawPolicy> for EscapePolicy {
    type Error = OrbitError;
    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        EscapePolicy::new(raw.re_threshold, raw.max_iter)
    }
}

impl EscapePolicy {
    pub fn new(re_threshold: f64, max_iter: usize) -> Result<Self, OrbitError> {
        if !(re_threshold > 0.0 && re_threshold <= MAX_RE_THRESHOLD) {
            return Err(OrbitError::InvalidThreshold(re_threshold));
        }
        if max_iter == 0 {
            return Err(OrbitError::ZeroBudget);
        }
        Ok(EscapePolicy {
            re_threshold,
            max_iter,
        })
    }

    pub fn with_max_iter(self, max_iter: usize) -> Result<Self, OrbitError> {
        Self::new(self.re_threshold, max_iter)
    }
}

impl Default for EscapePolicy {
    fn default() -> Self {
        EscapePolicy {
            re_threshold: DEFAULT_RE_THRESHOLD,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Returned by [`step`] when `Re z` is above the escape threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("orbit escaped: real part above threshold")]
pub struct EscapeSignal;

/// `lambda * exp(z)` evaluated as `lambda * (e^{Re z} unit(Im z))`, so that
/// `exp(z)` itself is never formed and `step(lambda, 0) == lambda` exactly.
///
/// Results that cannot be represented (huge `|lambda|`) are also reported as
/// an escape so that no non-finite value is ever produced.
#[inline]
pub fn step(lambda: Param, z: Complex, policy: &EscapePolicy) -> Result<Complex, EscapeSignal> {
    if !(z.re <= policy.re_threshold) {
        return Err(EscapeSignal);
    }
    raw_step(lambda, z).ok_or(EscapeSignal)
}

/// Unchecked evaluation for `Re z <= 700`; `None` if the result overflows.
#[inline]
pub(crate) fn raw_step(lambda: Param, z: Complex) -> Option<Complex> {
    let w = lambda.value() * (unit(z.im) * z.re.exp());
    if is_finite(w) {
        Some(w)
    } else {
        None
    }
}

/// The branch of `log(w / lambda)` closest to `reference`. Ties go to the
/// smaller branch index.
pub fn inverse_step(lambda: Param, w: Complex, reference: Complex) -> Result<Complex, OrbitError> {
    if w.re == 0.0 && w.im == 0.0 {
        return Err(OrbitError::OmittedValue);
    }
    Ok(inverse_candidates(lambda, w, reference)[0])
}

/// The two branches of `log(w / lambda)` nearest `reference`, best first.
pub(crate) fn inverse_candidates(lambda: Param, w: Complex, reference: Complex) -> [Complex; 2] {
    let re = w.norm().ln() - lambda.ln_modulus();
    let im = (w / lambda.value()).arg();
    let x = (reference.im - im) / TAU;
    let k = (x - 0.5).ceil();
    let best = Complex::new(re, im + TAU * k);
    // the runner-up is the neighbouring branch on the other side of `reference`
    let other_k = if x > k { k + 1.0 } else { k - 1.0 };
    let second = Complex::new(re, im + TAU * other_k);
    [best, second]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub index: usize,
    pub value: Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitStatus {
    Completed,
    Escaped { at_index: usize },
    CycleSuspected { period: usize, at_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub lambda: Param,
    pub points: Vec<OrbitPoint>,
    pub status: OrbitStatus,
    pub policy: EscapePolicy,
}

impl OrbitRecord {
    pub fn values(&self) -> impl ExactSizeIterator<Item = Complex> + '_ {
        self.points.iter().map(|p| p.value)
    }

    pub fn value(&self, index: usize) -> Option<Complex> {
        self.points.get(index).map(|p| p.value)
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    pub fn last(&self) -> Complex {
        self.points[self.points.len() - 1].value
    }

    pub fn escaped_at(&self) -> Option<usize> {
        match self.status {
            OrbitStatus::Escaped { at_index } => Some(at_index),
            _ => None,
        }
    }
}

/// Sliding window of the last [`MAX_PERIOD`] orbit points, stored as split
/// real/imaginary arrays so the proximity scan vectorises.
pub(crate) struct CycleWatch {
    re: [f64; MAX_PERIOD],
    im: [f64; MAX_PERIOD],
    len: usize,
    head: usize,
    tol_sq: f64,
    max_period: usize,
}

impl CycleWatch {
    pub(crate) fn new(tol: f64, max_period: usize) -> Self {
        CycleWatch {
            re: [0.0; MAX_PERIOD],
            im: [0.0; MAX_PERIOD],
            len: 0,
            head: 0,
            tol_sq: tol * tol,
            max_period: max_period.clamp(1, MAX_PERIOD),
        }
    }

    /// Records `z` and returns the smallest lag `p` at which an earlier point
    /// lies within the tolerance, checked before `z` enters the window.
    #[inline]
    pub(crate) fn push(&mut self, z: Complex) -> Option<usize> {
        let mut hit = false;
        let n = self.len.min(self.max_period);
        if n == MAX_PERIOD {
            let mut min = f64::INFINITY;
            for i in 0..MAX_PERIOD {
                let dr = self.re[i] - z.re;
                let di = self.im[i] - z.im;
                min = min.min(dr * dr + di * di);
            }
            hit = min < self.tol_sq;
        } else if n > 0 {
            hit = true;
        }
        let mut found = None;
        if hit {
            for p in 1..=n {
                let i = (self.head + MAX_PERIOD - p) % MAX_PERIOD;
                let dr = self.re[i] - z.re;
                let di = self.im[i] - z.im;
                if dr * dr + di * di < self.tol_sq {
                    found = Some(p);
                    break;
                }
            }
        }
        self.re[self.head] = z.re;
        self.im[self.head] = z.im;
        self.head = (self.head + 1) % MAX_PERIOD;
        self.len += 1;
        found
    }
}

/// The orbit `0, lambda, lambda e^lambda, ...` of the singular value.
///
/// Stops at `policy.max_iter` steps, when a point's real part exceeds the
/// escape threshold, or when a point returns within [`CYCLE_SUSPECT_TOL`] of
/// one of the previous [`MAX_PERIOD`] points.
pub fn singular_orbit(lambda: Param, policy: &EscapePolicy) -> OrbitRecord {
    singular_orbit_with(lambda, policy, CYCLE_SUSPECT_TOL, MAX_PERIOD)
}

pub fn singular_orbit_with(
    lambda: Param,
    policy: &EscapePolicy,
    cycle_tol: f64,
    max_period: usize,
) -> OrbitRecord {
    let mut points = Vec::with_capacity(policy.max_iter.min(4096) + 1);
    let mut watch = CycleWatch::new(cycle_tol, max_period);
    let mut z = Complex::new(0.0, 0.0);
    points.push(OrbitPoint { index: 0, value: z });
    watch.push(z);
    let mut status = OrbitStatus::Completed;
    for n in 1..=policy.max_iter {
        z = match step(lambda, z, policy) {
            Ok(w) => w,
            Err(EscapeSignal) => {
                // unreachable for threshold-checked points; representability
                // failure of the image is treated as escape at the last point
                status = OrbitStatus::Escaped { at_index: n - 1 };
                break;
            }
        };
        points.push(OrbitPoint { index: n, value: z });
        if z.re > policy.re_threshold {
            status = OrbitStatus::Escaped { at_index: n };
            break;
        }
        if let Some(p) = watch.push(z) {
            status = OrbitStatus::CycleSuspected {
                period: p,
                at_index: n,
            };
            break;
        }
    }
    OrbitRecord {
        lambda,
        points,
        status,
        policy: *policy,
    }
}

/// Block iteration `g = f^N` over an existing record without copying:
/// `xi(n) = zeta_{nN}` and `xi(n, k) = zeta_{nN + k}`.
#[derive(Debug, Clone, Copy)]
pub struct BlockView<'a> {
    record: &'a OrbitRecord,
    block: usize,
}

pub fn block_orbit(record: &OrbitRecord, n_tilde: usize) -> Result<BlockView<'_>, OrbitError> {
    if n_tilde == 0 {
        return Err(OrbitError::ZeroBlock);
    }
    Ok(BlockView {
        record,
        block: n_tilde,
    })
}

impl<'a> BlockView<'a> {
    pub fn block_size(&self) -> usize {
        self.block
    }

    /// Number of full block points `xi_0, xi_1, ...` available.
    pub fn len(&self) -> usize {
        self.record.last_index() / self.block + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xi(&self, n: usize) -> Option<Complex> {
        self.record.value(n.checked_mul(self.block)?)
    }

    pub fn xi_intermediate(&self, n: usize, k: usize) -> Option<Complex> {
        if k >= self.block {
            return None;
        }
        self.record.value(n.checked_mul(self.block)?.checked_add(k)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = Complex> + 'a {
        let block = self.block;
        self.record.points.iter().step_by(block).map(|p| p.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn p(re: f64, im: f64) -> Param {
        Param::from_parts(re, im).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn zero_param_rejected() {
        assert!(Param::from_parts(0.0, 0.0).is_err());
        assert!(Param::from_parts(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn policy_bounds() {
        assert!(EscapePolicy::new(700.0, 1).is_ok());
        assert!(EscapePolicy::new(700.5, 1).is_err());
        assert!(EscapePolicy::new(50.0, 0).is_err());
    }

    #[test]
    fn step_examples() {
        let pol = EscapePolicy::default();
        assert_eq!(step(p(1.0, 0.0), c(0.0, 0.0), &pol).unwrap(), c(1.0, 0.0));
        let w = step(p(0.0, TAU), c(0.0, TAU), &pol).unwrap();
        assert!((w - c(0.0, TAU)).norm() < 1e-14);
        let w = step(p(-1.0, 0.0), c(-1.0, 0.0), &pol).unwrap();
        assert!((w - c(-0.367_879_441_171_442_3, 0.0)).norm() < 1e-15);
        assert_eq!(step(p(1.0, 0.0), c(50.5, 0.0), &pol), Err(EscapeSignal));
    }

    #[test]
    fn orbit_of_one_escapes_at_four() {
        let rec = singular_orbit(p(1.0, 0.0), &EscapePolicy::new(50.0, 6).unwrap());
        let v: Vec<f64> = rec.values().map(|z| z.re).collect();
        assert_eq!(rec.status, OrbitStatus::Escaped { at_index: 4 });
        assert_eq!(v.len(), 5);
        assert!((v[2] - E).abs() < 1e-15);
        assert!((v[3] - 15.154_262_241_479_262).abs() < 1e-12);
        assert!(v[4] > 50.0);
    }

    #[test]
    fn orbit_of_two_pi_i_is_fixed() {
        let rec = singular_orbit(p(0.0, TAU), &EscapePolicy::default());
        assert_eq!(
            rec.status,
            OrbitStatus::CycleSuspected {
                period: 1,
                at_index: 2
            }
        );
        assert!((rec.value(2).unwrap() - c(0.0, TAU)).norm() < 1e-14);
    }

    #[test]
    fn orbit_of_minus_one_converges_to_minus_omega() {
        let rec = singular_orbit(p(-1.0, 0.0), &EscapePolicy::default());
        match rec.status {
            OrbitStatus::CycleSuspected { period, .. } => assert_eq!(period, 1),
            s => panic!("unexpected status {s:?}"),
        }
        assert!((rec.value(2).unwrap().re + 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((rec.value(3).unwrap().re + 0.692_200_627_555_346).abs() < 1e-12);
        assert!((rec.last().re + 0.567_143_290_409_783_8).abs() < 1e-8);
    }

    #[test]
    fn inverse_step_examples() {
        let z = inverse_step(p(1.0, 0.0), c(E, 0.0), c(1.2, 0.0)).unwrap();
        assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        let z = inverse_step(p(0.0, TAU), c(0.0, TAU), c(0.0, TAU)).unwrap();
        assert!((z - c(0.0, TAU)).norm() < 1e-14);
        let lam = p(-1.0, 0.0);
        let w = c(0.3, 0.4);
        let z = inverse_step(lam, w, c(0.0, 0.0)).unwrap();
        let back = step(lam, z, &EscapePolicy::default()).unwrap();
        assert!((back - w).norm() < 1e-12);
        assert_eq!(
            inverse_step(lam, c(0.0, 0.0), c(0.0, 0.0)),
            Err(OrbitError::OmittedValue)
        );
    }

    #[test]
    fn inverse_step_tie_goes_to_smaller_branch() {
        // log(1) = 0; reference at pi sits exactly between branches 0 and 1
        let z = inverse_step(p(1.0, 0.0), c(1.0, 0.0), c(0.0, PI)).unwrap();
        assert_eq!(z.im, 0.0);
    }

    #[test]
    fn block_view() {
        let rec = singular_orbit(p(0.0, TAU), &EscapePolicy::default());
        let one = block_orbit(&rec, 1).unwrap();
        assert!(rec.values().zip(one.iter()).all(|(a, b)| a == b));
        let two = block_orbit(&rec, 2).unwrap();
        assert_eq!(two.xi(0), Some(c(0.0, 0.0)));
        assert!((two.xi(1).unwrap() - c(0.0, TAU)).norm() < 1e-14);
        assert_eq!(two.xi_intermediate(0, 1), Some(c(0.0, TAU)));
        assert!(block_orbit(&rec, 0).is_err());

        let rec = singular_orbit(p(1.0, 0.0), &EscapePolicy::default());
        let two = block_orbit(&rec, 2).unwrap();
        assert!((two.xi(1).unwrap() - c(E, 0.0)).norm() < 1e-15);
        assert_eq!(two.xi(3), None);
    }

    #[test]
    fn record_json_roundtrip() {
        let rec = singular_orbit(p(-1.0, 0.0), &EscapePolicy::default());
        let s = serde_json::to_string(&rec).unwrap();
        let back: OrbitRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rec);
        assert!(serde_json::from_str::<Param>("[0.0, 0.0]").is_err());
    }
}
