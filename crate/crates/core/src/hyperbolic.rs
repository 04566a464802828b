//! Finding and certifying hyperbolic parameters near a seed.
//!
//! A certificate is a chain of disk enclosures `D_0 -> D_1 -> ... -> D_m`
//! with `f(D_j) ⊆ D_{j+1}` and `D_m` strictly inside `D_0`. A holomorphic map
//! sending a disk compactly into itself has an attracting fixed point there,
//! so `f^m` has an attracting cycle and the parameter is hyperbolic.
//!
//! Enclosures use the bound `f(D(c, r)) ⊆ D(lambda e^c, |lambda| e^{Re c}(e^r - 1))`
//! with a multiplicative slack of `1 + 2^-40` per step; results are rigorous
//! up to the usual floating-point model assumptions.
//!
//! Disks with `Re c + r > 700` cannot be propagated in `f64`. If such a disk
//! maps into a sector pointing into the far left half-plane, the next image
//! lies within `e^{-|lambda| e^{Re c - r} kappa}` of the origin and the two
//! steps are recorded as a sector followed by a tiny disk around `0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_parameter, CycleInfo, ParamTag};
use crate::derivatives::{build_ledger, param_derivative_closed};
use crate::orbit::{raw_step, EscapePolicy, Param, MAX_RE_THRESHOLD};
use crate::scaled::ScaledComplex;
use crate::{unit, Complex, TAU};

use std::f64::consts::{FRAC_PI_2, PI};

const RADIUS_SLACK: f64 = 1.0 + 1.0 / (1u64 << 40) as f64;
/// Rounding allowance for the computed image centre, in units of
/// `eps |centre|`. The relative slack alone cannot absorb it once the radius
/// drops below about `1e-4 |centre|`.
const CENTER_ULPS: f64 = 8.0;
/// Smallest radius reported for an enclosure whose true radius underflows.
const RADIUS_FLOOR: f64 = 1e-300;
/// A far disk must map into a sector whose argument stays this far past the
/// imaginary axis for the flip step to apply.
const FLIP_MIN_COS: f64 = 1e-3;
/// Default trap radii for certification.
pub const TRAP_RADII: [f64; 3] = [0.1, 0.01, 0.001];
/// Scan hits often sit on long cycles whose derivative swings widely along
/// the orbit; smaller disks rescue them.
const SCAN_RADII: [f64; 9] = [0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9];
pub const SCAN_SAMPLES: usize = 4096;
/// Certification attempts per scan.
const SCAN_CERTIFY_LIMIT: usize = 32;
/// Largest orbit time tried by the route strategy.
pub const ROUTE_MAX_TIME: usize = 48;
const ROUTE_HOMOTOPY_STEPS: usize = 8;
/// The flip target is placed so that its image is at least this far left.
const FLIP_DEPTH: f64 = 64.0;
const DEFAULT_ROUTE_M: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperbolicError {
    #[error("enclosure leaves the representable range (Re c + r > 700)")]
    OverflowEnclosure,
    #[error("final enclosure is not contained in the initial disk")]
    NotContained,
    #[error("route overflows before reaching x0 = {x0}")]
    RouteOverflow { x0: f64 },
    #[error("Newton iteration did not converge")]
    NoConvergence,
    #[error("parameter derivative vanished")]
    DerivativeSingular,
    #[error("no hyperbolic parameter found after {samples_tried} attempts")]
    NotFound { samples_tried: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskEnclosure {
    pub center: Complex,
    pub radius: f64,
}

impl DiskEnclosure {
    pub fn new(center: Complex, radius: f64) -> Self {
        DiskEnclosure { center, radius }
    }

    pub fn contains(&self, z: Complex) -> bool {
        (z - self.center).norm() <= self.radius
    }
}

/// `{ w : log|w| in [log_mod_lo, log_mod_hi], arg w in [arg_lo, arg_hi] }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorEnclosure {
    pub log_mod_lo: f64,
    pub log_mod_hi: f64,
    pub arg_lo: f64,
    pub arg_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Enclosure {
    Disk(DiskEnclosure),
    Sector(SectorEnclosure),
}

/// Rigorous image enclosure of a disk under one step.
pub fn propagate_disk(lambda: Param, disk: DiskEnclosure) -> Result<DiskEnclosure, HyperbolicError> {
    let c = disk.center;
    if !(c.re + disk.radius <= MAX_RE_THRESHOLD) {
        return Err(HyperbolicError::OverflowEnclosure);
    }
    let center = raw_step(lambda, c).ok_or(HyperbolicError::OverflowEnclosure)?;
    let log_scale = lambda.ln_modulus() + c.re;
    let radius = if disk.radius == 0.0 {
        0.0
    } else {
        // |lambda| e^{Re c} (e^r - 1) evaluated in log form
        let log_r = log_scale + disk.radius.exp_m1().ln();
        if log_r > 709.0 {
            return Err(HyperbolicError::OverflowEnclosure);
        }
        (log_r.exp() * RADIUS_SLACK + CENTER_ULPS * f64::EPSILON * center.norm()).max(RADIUS_FLOOR)
    };
    Ok(DiskEnclosure { center, radius })
}

/// Two-step enclosure for a disk far to the right whose image points into
/// the left half-plane. Returns the intermediate sector and the final disk.
pub fn flip_enclosure(lambda: Param, disk: DiskEnclosure) -> Option<(SectorEnclosure, DiskEnclosure)> {
    let c = disk.center;
    let r = disk.radius;
    if !(r < FRAC_PI_2) || !c.re.is_finite() {
        return None;
    }
    let mid = lambda.rotation(c.im);
    // worst case of cos over [mid - r, mid + r]
    let dist_to_zero_angle = mid.min(TAU - mid);
    let worst = dist_to_zero_angle - r;
    if worst <= FRAC_PI_2 {
        return None;
    }
    let kappa = -worst.cos();
    if kappa < FLIP_MIN_COS {
        return None;
    }
    let log_mod_lo = lambda.ln_modulus() + c.re - r;
    let log_mod_hi = lambda.ln_modulus() + c.re + r;
    // Re w <= -e^{log_mod_lo} kappa on the sector, so |f(w)| <= |lambda| e^{-that}
    let depth = log_mod_lo.min(700.0).exp() * kappa;
    let radius = ((lambda.ln_modulus() - depth).exp() * RADIUS_SLACK).max(RADIUS_FLOOR);
    let sector = SectorEnclosure {
        log_mod_lo,
        log_mod_hi,
        arg_lo: mid - r,
        arg_hi: mid + r,
    };
    Some((sector, DiskEnclosure::new(Complex::new(0.0, 0.0), radius)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapCertificate {
    pub lambda: Param,
    pub period: usize,
    pub initial: DiskEnclosure,
    #[serde(rename = "final")]
    pub final_disk: DiskEnclosure,
    pub margin: f64,
    pub chain: Vec<Enclosure>,
}

impl TrapCertificate {
    /// Recomputes the chain from `initial` and checks every link and the
    /// final containment.
    pub fn verify(&self) -> bool {
        match certify_disk_contraction(self.lambda, self.initial.center, self.period, self.initial.radius) {
            Ok(again) => again.chain == self.chain && again.margin > 0.0,
            Err(_) => false,
        }
    }
}

/// Propagates `D(center, rho)` for `m` steps and checks that the result lies
/// strictly inside the starting disk.
pub fn certify_disk_contraction(
    lambda: Param,
    center: Complex,
    m: usize,
    rho: f64,
) -> Result<TrapCertificate, HyperbolicError> {
    if m == 0 || !(rho > 0.0) {
        return Err(HyperbolicError::InvalidInput("need m >= 1 and rho > 0".into()));
    }
    let initial = DiskEnclosure::new(center, rho);
    let mut chain = vec![Enclosure::Disk(initial)];
    let mut current = initial;
    let mut steps = 0;
    while steps < m {
        match propagate_disk(lambda, current) {
            Ok(next) => {
                current = next;
                chain.push(Enclosure::Disk(next));
                steps += 1;
            }
            Err(HyperbolicError::OverflowEnclosure) if steps + 2 <= m => {
                let (sector, next) = flip_enclosure(lambda, current).ok_or(HyperbolicError::OverflowEnclosure)?;
                chain.push(Enclosure::Sector(sector));
                chain.push(Enclosure::Disk(next));
                current = next;
                steps += 2;
            }
            Err(e) => return Err(e),
        }
    }
    let used = (current.center - center).norm() + current.radius;
    let margin = 1.0 - used / rho;
    if !(margin > 0.0) {
        return Err(HyperbolicError::NotContained);
    }
    Ok(TrapCertificate {
        lambda,
        period: m,
        initial,
        final_disk: current,
        margin,
        chain,
    })
}

/// `f^m(z)` and its derivative, passing through points far to the right by
/// the same flip rule as [`flip_enclosure`]: a point with `Re z > 700` whose
/// image points into the left half-plane is sent to `0` in two steps.
pub fn extended_iterate(lambda: Param, z: Complex, m: usize) -> Option<(Complex, ScaledComplex)> {
    let mut w = z;
    let mut d = ScaledComplex::ONE;
    let mut i = 0;
    while i < m {
        if w.re <= MAX_RE_THRESHOLD {
            let next = raw_step(lambda, w)?;
            d = d.mul(ScaledComplex::new(lambda.ln_modulus() + w.re, lambda.rotation(w.im)));
            w = next;
            i += 1;
        } else {
            if i + 2 > m || !w.re.is_finite() {
                return None;
            }
            let theta = lambda.rotation(w.im);
            if theta.cos() > -FLIP_MIN_COS {
                return None;
            }
            // Re f(w) < -|lambda| e^700 * 1e-3, so f(f(w)) underflows to 0 and
            // the derivative factor lambda e^{f(w)} is below any f64.
            w = Complex::new(0.0, 0.0);
            d = ScaledComplex::ZERO;
            i += 2;
        }
    }
    Some((w, d))
}

/// Attracting cycle of `f^m` obtained by iterating from `z`.
pub fn cycle_by_iteration(lambda: Param, z: Complex, m: usize, tol: f64) -> Option<CycleInfo> {
    let mut w = z;
    for _ in 0..500 {
        let (next, d) = extended_iterate(lambda, w, m)?;
        let residual = (next - w).norm();
        if residual <= tol * w.norm().max(1.0) {
            let multiplier = d.to_complex()?;
            return Some(CycleInfo {
                period: m,
                point: w,
                multiplier,
                residual,
            });
        }
        w = next;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRoute {
    /// `Im z` on the line `L = { Im z = -arg lambda0 }`.
    pub line_im: f64,
    pub m: f64,
    pub waypoints: Vec<Complex>,
    /// Point on `L + pi i`; its image lies on the negative real axis.
    pub flip_target: Complex,
    pub x0: f64,
}

/// Waypoints `z_1 = M - i arg(lambda0)`, `Re z_{k+1} = exp(Re z_k / 2)` on
/// the same line until `Re z_p >= x0`, then the flip target on `L + pi i`.
pub fn build_route(lambda0: Param, x0: f64, m: f64) -> Result<TargetRoute, HyperbolicError> {
    if !(m >= 10.0) {
        return Err(HyperbolicError::InvalidInput(format!("M must be at least 10, got {m}")));
    }
    let line_im = -lambda0.arg();
    let mut re = m;
    let mut waypoints = vec![Complex::new(re, line_im)];
    while re < x0 {
        re = (re / 2.0).exp();
        if re > MAX_RE_THRESHOLD {
            return Err(HyperbolicError::RouteOverflow { x0 });
        }
        waypoints.push(Complex::new(re, line_im));
    }
    Ok(TargetRoute {
        line_im,
        m,
        waypoints,
        flip_target: Complex::new((re / 2.0).exp(), line_im + PI),
        x0,
    })
}

/// `zeta_n(lambda)` and `zeta'_n(lambda)`, allowing intermediate real parts
/// up to 700.
fn zeta_and_derivative(lambda: Param, n: usize) -> Option<(Complex, ScaledComplex)> {
    let policy = EscapePolicy::new(MAX_RE_THRESHOLD, n).ok()?;
    let ledger = build_ledger(lambda, &policy);
    if ledger.truncated_at < n {
        return None;
    }
    let d = param_derivative_closed(&ledger, n).ok()?;
    Some((ledger.entries[n].zeta, d))
}

/// Newton's method in the parameter for `zeta_n(lambda) = target`.
pub fn solve_singular_target(
    lambda0: Param,
    n: usize,
    target: Complex,
    tol: f64,
    max_iter: usize,
) -> Result<Param, HyperbolicError> {
    if n == 0 {
        return Err(HyperbolicError::InvalidInput("n must be at least 1".into()));
    }
    // 0 is omitted by every zeta_n with n >= 2; Newton would only drift
    // towards lambda -> -infinity
    if n >= 2 && target == Complex::new(0.0, 0.0) {
        return Err(HyperbolicError::NoConvergence);
    }
    let mut lambda = lambda0;
    for _ in 0..=max_iter {
        let (zeta, d) = zeta_and_derivative(lambda, n).ok_or(HyperbolicError::NoConvergence)?;
        let residual = zeta - target;
        if residual.norm() < tol {
            return Ok(lambda);
        }
        if d.is_zero() || d.log_mag < -700.0 {
            return Err(HyperbolicError::DerivativeSingular);
        }
        let delta = ScaledComplex::from(residual)
            .div(d)
            .to_complex()
            .ok_or(HyperbolicError::NoConvergence)?;
        lambda = Param::new(lambda.value() - delta).map_err(|_| HyperbolicError::NoConvergence)?;
    }
    Err(HyperbolicError::NoConvergence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Low-discrepancy sampling of the disk, classifying each sample.
    Scan,
    /// Steering the singular orbit onto the flip line by parameter Newton.
    Route,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicWitness {
    pub lambda: Param,
    pub cycle: CycleInfo,
    pub certificate: Option<TrapCertificate>,
    pub distance_to_seed: f64,
    pub strategy: SearchStrategy,
    /// Samples (scan) or orbit times (route) examined.
    pub samples_tried: usize,
    /// Route used for steering, when the route strategy produced the witness.
    pub route: Option<TargetRoute>,
}

fn certify_cycle(lambda: Param, cycle: &CycleInfo, radii: &[f64]) -> Option<TrapCertificate> {
    radii
        .iter()
        .find_map(|&rho| certify_disk_contraction(lambda, cycle.point, cycle.period, rho).ok())
}

fn seed_witness(lambda0: Param, policy: &EscapePolicy, strategy: SearchStrategy) -> Option<HyperbolicWitness> {
    let cls = classify_parameter(lambda0, policy, 1.0).ok()?;
    let ParamTag::Attracting { cycle } = cls.tag else {
        return None;
    };
    let certificate = certify_cycle(lambda0, &cycle, &TRAP_RADII)?;
    Some(HyperbolicWitness {
        lambda: lambda0,
        cycle,
        certificate: Some(certificate),
        distance_to_seed: 0.0,
        strategy,
        samples_tried: 1,
        route: None,
    })
}

/// Sample `index` of the scan: the seed itself, then an R2 low-discrepancy
/// sequence mapped area-uniformly onto `D(lambda0, r)`.
pub fn scan_sample(lambda0: Param, r: f64, index: usize) -> Complex {
    const A1: f64 = 0.754_877_666_246_692_7;
    const A2: f64 = 0.569_840_290_998_053_2;
    if index == 0 {
        return lambda0.value();
    }
    let i = index as f64;
    let u = (0.5 + i * A1).fract();
    let v = (0.5 + i * A2).fract();
    lambda0.value() + unit(TAU * v) * (r * u.sqrt())
}

fn scan(lambda0: Param, r: f64, policy: &EscapePolicy) -> Result<HyperbolicWitness, HyperbolicError> {
    let hits: Vec<(usize, Param, CycleInfo)> = (0..SCAN_SAMPLES)
        .into_par_iter()
        .filter_map(|i| {
            let lam = Param::new(scan_sample(lambda0, r, i)).ok()?;
            match classify_parameter(lam, policy, 1.0).ok()?.tag {
                ParamTag::Attracting { cycle } => Some((i, lam, cycle)),
                _ => None,
            }
        })
        .collect();
    let mut hits = hits;
    hits.sort_by(|a, b| {
        let da = (a.1.value() - lambda0.value()).norm();
        let db = (b.1.value() - lambda0.value()).norm();
        da.total_cmp(&db).then(a.0.cmp(&b.0))
    });
    let mut fallback = None;
    for (_, lam, cycle) in hits.iter().take(SCAN_CERTIFY_LIMIT) {
        let witness = HyperbolicWitness {
            lambda: *lam,
            cycle: *cycle,
            certificate: certify_cycle(*lam, cycle, &SCAN_RADII),
            distance_to_seed: (lam.value() - lambda0.value()).norm(),
            strategy: SearchStrategy::Scan,
            samples_tried: SCAN_SAMPLES,
            route: None,
        };
        if witness.certificate.is_some() {
            return Ok(witness);
        }
        fallback.get_or_insert(witness);
    }
    fallback.ok_or(HyperbolicError::NotFound {
        samples_tried: SCAN_SAMPLES,
    })
}

/// Flip target for time `n`: on `L + pi i`, no further left than `zeta`,
/// and deep enough that its image lies at least [`FLIP_DEPTH`] to the left.
fn flip_target_near(route: &TargetRoute, lambda0: Param, zeta: Complex) -> Complex {
    let x_min = (FLIP_DEPTH / lambda0.modulus()).ln();
    let re = zeta.re.max(x_min);
    let base = route.flip_target.im;
    let k = ((zeta.im - base) / TAU).round();
    Complex::new(re, base + TAU * k)
}

fn route_search(lambda0: Param, r: f64) -> Result<HyperbolicWitness, HyperbolicError> {
    let route = build_route(lambda0, DEFAULT_ROUTE_M, DEFAULT_ROUTE_M)?;
    let mut tried = 0;
    for n in 1..=ROUTE_MAX_TIME {
        let Some((zeta0, d0)) = zeta_and_derivative(lambda0, n) else {
            break;
        };
        tried += 1;
        let target = flip_target_near(&route, lambda0, zeta0);
        let gap = (target - zeta0).norm();
        let reach = if d0.is_zero() { 0.0 } else { (d0.log_mag + r.ln()).min(700.0).exp() };
        if gap > 0.5 * reach {
            continue;
        }
        let Some(lambda) = steer(lambda0, n, zeta0, target) else {
            continue;
        };
        let distance = (lambda.value() - lambda0.value()).norm();
        if distance > r {
            continue;
        }
        if let Some(w) = certify_route_candidate(lambda, n, distance, tried, &route) {
            return Ok(w);
        }
    }
    Err(HyperbolicError::NotFound { samples_tried: tried })
}

/// Homotopy from `zeta_n(lambda0)` to `target` in equal sub-steps.
fn steer(lambda0: Param, n: usize, start: Complex, target: Complex) -> Option<Param> {
    let mut lambda = lambda0;
    for s in 1..=ROUTE_HOMOTOPY_STEPS {
        let t = s as f64 / ROUTE_HOMOTOPY_STEPS as f64;
        let sub = start + (target - start) * t;
        let tol = 1e-9 * sub.norm().max(1.0);
        lambda = solve_singular_target(lambda, n, sub, tol, 60).ok()?;
    }
    Some(lambda)
}

fn certify_route_candidate(
    lambda: Param,
    n: usize,
    distance: f64,
    tried: usize,
    route: &TargetRoute,
) -> Option<HyperbolicWitness> {
    let period = n + 2;
    // the Koebe-style radius 1/(8|Df^n(0)|) keeps the disk at time n well
    // inside one strip
    let ledger = build_ledger(lambda, &EscapePolicy::new(MAX_RE_THRESHOLD, n).ok()?);
    let log_df = ledger.entries.get(n)?.log_mag_d;
    let koebe = (-log_df - 8f64.ln()).exp();
    let mut radii: Vec<f64> = TRAP_RADII.to_vec();
    radii.extend((0..10).map(|k| koebe / 2f64.powi(k)).filter(|r| *r > RADIUS_FLOOR));
    let origin = Complex::new(0.0, 0.0);
    let certificate = radii
        .iter()
        .find_map(|&rho| certify_disk_contraction(lambda, origin, period, rho).ok())?;
    let cycle = cycle_by_iteration(lambda, origin, period, 1e-13)?;
    if !cycle.is_attracting() {
        return None;
    }
    Some(HyperbolicWitness {
        lambda,
        cycle,
        certificate: Some(certificate),
        distance_to_seed: distance,
        strategy: SearchStrategy::Route,
        samples_tried: tried,
        route: Some(route.clone()),
    })
}

/// A hyperbolic parameter in `D(lambda0, r)`, certified when possible.
pub fn find_hyperbolic_near(
    lambda0: Param,
    r: f64,
    policy: &EscapePolicy,
    strategy: SearchStrategy,
) -> Result<HyperbolicWitness, HyperbolicError> {
    if !(r > 0.0) {
        return Err(HyperbolicError::InvalidInput(format!("radius must be positive, got {r}")));
    }
    if let Some(w) = seed_witness(lambda0, policy, strategy) {
        return Ok(w);
    }
    match strategy {
        SearchStrategy::Scan => scan(lambda0, r, policy),
        SearchStrategy::Route => route_search(lambda0, r),
    }
}
