//! Holomorphic motion of post-singular points and the distortion experiments.
//!
//! A point `z` of the post-singular orbit of `lambda0` moves to
//! `h(z) = lim g_lambda^{-n}(g_lambda0^n(z))`: push `z` forward `depth` steps
//! under `lambda0`, then pull the endpoint back under `lambda` choosing at
//! each step the inverse branch nearest the reference orbit. The parameter
//! segment is split into homotopy sub-steps; each sub-step uses the chain of
//! the previous one as its reference, so branch choices stay consistent for
//! any segment length the caller picks.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::newton_refine_cycle;
use crate::derivatives::{build_ledger, param_derivative};
use crate::orbit::{inverse_candidates, raw_step, singular_orbit, EscapePolicy, Param};
use crate::orbit::{DEFAULT_MAX_ITER, MAX_PERIOD};
use crate::scaled::ScaledComplex;
use crate::{unit, Complex, TAU};

/// Two inverse branches closer than this to the reference make the choice
/// ambiguous.
pub const BRANCH_AMBIGUITY_TOL: f64 = 1e-3;
pub const DEFAULT_HOMOTOPY_STEPS: usize = 8;
pub const DEFAULT_DEPTH: usize = 30;
/// Tolerance for recognising a base point as an orbit or periodic point.
const MEMBERSHIP_TOL: f64 = 1e-9;
/// Boundary samples used by [`time_to_scale`].
pub const SCALE_SAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("inverse branches are ambiguous at pullback step {step} (gap {gap:e})")]
    BranchAmbiguity { step: usize, gap: f64 },
    #[error("forward orbit escaped at step {step}")]
    EscapeDuringTracking { step: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("scale not reached within {max_iter} iterations")]
    BudgetExceeded { max_iter: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTrack {
    pub lambda0: Param,
    pub lambda1: Param,
    pub base_point: Complex,
    pub tracked_point: Complex,
    pub pullback_depth: usize,
    pub homotopy_steps: usize,
    pub conjugacy_residual: f64,
    /// Final pullback chain `h(g^k(z))` approximations, `k = 0..=depth`.
    pub chain: Vec<Complex>,
}

/// Forward orbit of the base point under `lambda0`, `depth + 1` points.
///
/// Periodic base points use the refined cycle so that the reference does
/// not drift away from a repelling cycle through rounding.
fn reference_orbit(lambda0: Param, z: Complex, depth: usize) -> Result<Vec<Complex>, MotionError> {
    if let Some(cycle) = periodic_cycle(lambda0, z) {
        return Ok((0..=depth).map(|k| cycle[k % cycle.len()]).collect());
    }
    let mut orbit = Vec::with_capacity(depth + 1);
    let mut w = z;
    orbit.push(w);
    for step in 1..=depth {
        if !(w.re <= crate::orbit::MAX_RE_THRESHOLD) {
            return Err(MotionError::EscapeDuringTracking { step });
        }
        w = raw_step(lambda0, w).ok_or(MotionError::EscapeDuringTracking { step })?;
        orbit.push(w);
    }
    Ok(orbit)
}

/// The refined cycle through `z` if `z` is periodic of period at most
/// [`MAX_PERIOD`].
fn periodic_cycle(lambda: Param, z: Complex) -> Option<Vec<Complex>> {
    let mut w = z;
    for p in 1..=MAX_PERIOD {
        if !(w.re <= crate::orbit::MAX_RE_THRESHOLD) {
            return None;
        }
        w = raw_step(lambda, w)?;
        if (w - z).norm() < MEMBERSHIP_TOL * z.norm().max(1.0) {
            let cyc = newton_refine_cycle(lambda, z, p, 1e-14 * z.norm().max(1.0), 20).ok()?;
            let mut pts = vec![cyc.point];
            for _ in 1..p {
                pts.push(raw_step(lambda, *pts.last()?)?);
            }
            return Some(pts);
        }
    }
    None
}

/// Checks that `z` is a post-singular point (index >= 1) or a periodic point.
fn check_base_point(lambda0: Param, z: Complex) -> Result<(), MotionError> {
    if z.norm() < MEMBERSHIP_TOL {
        return Err(MotionError::PreconditionViolation(
            "the singular value 0 cannot be tracked".into(),
        ));
    }
    let record = singular_orbit(lambda0, &EscapePolicy::default());
    let scale = z.norm().max(1.0);
    let on_orbit = record.values().skip(1).any(|w| (w - z).norm() < MEMBERSHIP_TOL * scale);
    if on_orbit || periodic_cycle(lambda0, z).is_some() {
        Ok(())
    } else {
        Err(MotionError::PreconditionViolation(format!(
            "{z} is neither on the singular orbit nor periodic"
        )))
    }
}

/// Pulls `reference[depth]` back under `lambda`, following `reference`.
fn pull_back(lambda: Param, start: Complex, reference: &[Complex]) -> Result<Vec<Complex>, MotionError> {
    let depth = reference.len() - 1;
    let mut chain = vec![Complex::new(0.0, 0.0); depth + 1];
    chain[depth] = start;
    for k in (0..depth).rev() {
        let w = chain[k + 1];
        if w.re == 0.0 && w.im == 0.0 {
            return Err(MotionError::PreconditionViolation("pullback reached the omitted value".into()));
        }
        let [best, second] = inverse_candidates(lambda, w, reference[k]);
        let gap = (second - reference[k]).norm() - (best - reference[k]).norm();
        if gap < BRANCH_AMBIGUITY_TOL {
            return Err(MotionError::BranchAmbiguity { step: depth - k, gap });
        }
        chain[k] = best;
    }
    Ok(chain)
}

/// The motion chain of `z`: `chain[k]` approximates `h_lambda1(g^k(z))`.
fn motion_chain(
    lambda0: Param,
    lambda1: Param,
    z: Complex,
    depth: usize,
    steps: usize,
) -> Result<Vec<Complex>, MotionError> {
    let forward = reference_orbit(lambda0, z, depth)?;
    if lambda0 == lambda1 {
        return Ok(forward);
    }
    let start = forward[depth];
    let mut reference = forward;
    let (a, b) = (lambda0.value(), lambda1.value());
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        let lam = Param::new(a + (b - a) * t)
            .map_err(|_| MotionError::PreconditionViolation("homotopy passes through lambda = 0".into()))?;
        reference = pull_back(lam, start, &reference)?;
    }
    Ok(reference)
}

fn tracked(lambda0: Param, lambda1: Param, z: Complex, depth: usize, steps: usize) -> Result<Complex, MotionError> {
    Ok(motion_chain(lambda0, lambda1, z, depth, steps)?[0])
}

/// `|h(g_lambda0(z)) - g_lambda1(h(z))|` with independent tracks of `z` and
/// `g_lambda0(z)`.
fn residual(
    lambda0: Param,
    lambda1: Param,
    z: Complex,
    hz: Complex,
    depth: usize,
    steps: usize,
) -> Result<f64, MotionError> {
    if lambda0 == lambda1 {
        return Ok(0.0);
    }
    let gz = reference_orbit(lambda0, z, 1)?[1];
    let hgz = tracked(lambda0, lambda1, gz, depth, steps)?;
    let ghz = raw_step(lambda1, hz).ok_or(MotionError::EscapeDuringTracking { step: 1 })?;
    Ok((hgz - ghz).norm())
}

/// Moves the post-singular point `z` of `lambda0` to its position for `lambda1`.
pub fn track_point(
    lambda0: Param,
    lambda1: Param,
    z: Complex,
    depth: usize,
    steps: usize,
) -> Result<MotionTrack, MotionError> {
    if depth == 0 || steps == 0 {
        return Err(MotionError::PreconditionViolation("depth and steps must be positive".into()));
    }
    check_base_point(lambda0, z)?;
    let chain = motion_chain(lambda0, lambda1, z, depth, steps)?;
    let tracked_point = chain[0];
    let conjugacy_residual = residual(lambda0, lambda1, z, tracked_point, depth, steps)?;
    Ok(MotionTrack {
        lambda0,
        lambda1,
        base_point: z,
        tracked_point,
        pullback_depth: depth,
        homotopy_steps: steps,
        conjugacy_residual,
        chain,
    })
}

/// Recomputes the conjugacy residual of `track` from scratch.
pub fn verify_conjugacy(track: &MotionTrack) -> Result<f64, MotionError> {
    let (l0, l1) = (track.lambda0, track.lambda1);
    let hz = tracked(l0, l1, track.base_point, track.pullback_depth, track.homotopy_steps)?;
    residual(l0, l1, track.base_point, hz, track.pullback_depth, track.homotopy_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionStats {
    pub radius: f64,
    /// Orbit time `n` at which derivatives are compared.
    pub n_used: usize,
    /// `sup |xi'_n(l1) / xi'_n(l2) - 1|` over retained pairs.
    pub sup_ratio_dev: f64,
    pub affine_constant_lo: f64,
    pub affine_constant_hi: f64,
    pub pairs_sampled: usize,
    /// Pairs dropped because an orbit left the `delta`-neighbourhood of the
    /// seed orbit before time `n`.
    pub pairs_excluded: usize,
    pub delta: f64,
    /// Largest distance from the seed orbit seen before time `n`.
    pub max_separation: f64,
}

impl DistortionStats {
    pub const CSV_HEADER: &'static str =
        "radius,n_used,sup_ratio_dev,affine_constant_lo,affine_constant_hi,pairs_sampled,pairs_excluded,delta,max_separation";

    pub fn write_csv<W: Write>(rows: &[DistortionStats], mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in rows {
            writeln!(
                w,
                "{:e},{},{:e},{:e},{:e},{},{},{:e},{:e}",
                s.radius,
                s.n_used,
                s.sup_ratio_dev,
                s.affine_constant_lo,
                s.affine_constant_hi,
                s.pairs_sampled,
                s.pairs_excluded,
                s.delta,
                s.max_separation
            )?;
        }
        Ok(())
    }
}

/// Uniform point of `D(center, r)` by rejection from the bounding square.
pub(crate) fn sample_disk(rng: &mut ChaCha8Rng, center: Complex, r: f64) -> Complex {
    loop {
        let u: f64 = rng.gen_range(-1.0..1.0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        if u * u + v * v <= 1.0 {
            return center + Complex::new(u, v) * r;
        }
    }
}

/// `0.1 min(D, 1)` with `D` the distance of the truncated orbit (index >= 1)
/// to the origin.
pub fn default_delta(lambda0: Param, n: usize) -> f64 {
    let policy = EscapePolicy::new(crate::orbit::DEFAULT_RE_THRESHOLD, n.max(1)).expect("valid policy");
    let rec = singular_orbit(lambda0, &policy);
    let d_hat = rec.values().skip(1).map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    0.1 * d_hat.min(1.0)
}

struct PairSample {
    ratio_dev: f64,
    affine: f64,
    separation: f64,
}

/// `zeta_k(lambda)` for `k = 0..=n` and `zeta'_n(lambda)`.
fn orbit_and_derivative(lambda: Param, n: usize) -> Option<(Vec<Complex>, ScaledComplex)> {
    let policy = EscapePolicy::new(crate::orbit::MAX_RE_THRESHOLD, n).ok()?;
    let ledger = build_ledger(lambda, &policy);
    if ledger.truncated_at < n {
        return None;
    }
    let d = param_derivative(&ledger, n).ok()?;
    Some((ledger.entries.iter().map(|e| e.zeta).collect(), d))
}

/// Distortion of `xi_n = zeta_n` (block size 1) over random pairs in
/// `D(lambda0, r)`.
pub fn distortion_report(lambda0: Param, r: f64, n: usize, pairs: usize, seed: u64) -> DistortionStats {
    distortion_report_with(lambda0, r, n, pairs, seed, default_delta(lambda0, DEFAULT_MAX_ITER))
}

pub fn distortion_report_with(
    lambda0: Param,
    r: f64,
    n: usize,
    pairs: usize,
    seed: u64,
    delta: f64,
) -> DistortionStats {
    let n = n.max(1);
    let seed_orbit = orbit_and_derivative(lambda0, n);
    let seed_ledger = build_ledger(lambda0, &EscapePolicy::new(crate::orbit::MAX_RE_THRESHOLD, n).expect("policy"));
    let log_dg = seed_ledger.entries.get(n - 1).map(|e| e.log_mag_d);

    let samples: Vec<Option<PairSample>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let (ref_orbit, _) = seed_orbit.as_ref()?;
            let log_dg = log_dg?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let l1 = Param::new(sample_disk(&mut rng, lambda0.value(), r)).ok()?;
            let l2 = Param::new(sample_disk(&mut rng, lambda0.value(), r)).ok()?;
            let (o1, d1) = orbit_and_derivative(l1, n)?;
            let (o2, d2) = orbit_and_derivative(l2, n)?;
            let separation = (0..n)
                .flat_map(|k| [(o1[k] - ref_orbit[k]).norm(), (o2[k] - ref_orbit[k]).norm()])
                .fold(0.0, f64::max);
            if separation > delta {
                return None;
            }
            let ratio_dev = (d1.div(d2).to_complex()? - 1.0).norm();
            let dl = (l1.value() - l2.value()).norm();
            let affine = ((o1[n] - o2[n]).norm().ln() - log_dg - dl.ln()).exp();
            Some(PairSample {
                ratio_dev,
                affine,
                separation,
            })
        })
        .collect();

    let kept: Vec<&PairSample> = samples.iter().flatten().collect();
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&PairSample) -> f64| kept.iter().map(|s| g(s)).fold(init, f);
    DistortionStats {
        radius: r,
        n_used: n,
        sup_ratio_dev: fold(f64::max, 0.0, |s| s.ratio_dev),
        affine_constant_lo: if kept.is_empty() { 0.0 } else { fold(f64::min, f64::INFINITY, |s| s.affine) },
        affine_constant_hi: fold(f64::max, 0.0, |s| s.affine),
        pairs_sampled: pairs,
        pairs_excluded: pairs - kept.len(),
        delta,
        max_separation: fold(f64::max, 0.0, |s| s.separation),
    }
}

/// Smallest `n` at which the image of the circle `|lambda - lambda0| = r`
/// under `lambda -> zeta_n(lambda)` has diameter at least `s`.
pub fn time_to_scale(lambda0: Param, r: f64, s: f64) -> Result<usize, MotionError> {
    time_to_scale_with(lambda0, r, s, DEFAULT_MAX_ITER)
}

pub fn time_to_scale_with(lambda0: Param, r: f64, s: f64, max_iter: usize) -> Result<usize, MotionError> {
    if !(r > 0.0 && s > 0.0) {
        return Err(MotionError::PreconditionViolation("r and S must be positive".into()));
    }
    let lambdas: Vec<Complex> = (0..SCALE_SAMPLES)
        .map(|k| lambda0.value() + unit(TAU * k as f64 / SCALE_SAMPLES as f64) * r)
        .collect();
    let mut z = vec![Complex::new(0.0, 0.0); SCALE_SAMPLES];
    for n in 1..=max_iter {
        for (w, lam) in z.iter_mut().zip(&lambdas) {
            // a sample past the escape threshold is already at every scale
            if w.re > crate::orbit::DEFAULT_RE_THRESHOLD {
                return Ok(n);
            }
            *w = lam * (unit(w.im) * w.re.exp());
        }
        if diameter(&z) >= s {
            return Ok(n);
        }
    }
    Err(MotionError::BudgetExceeded { max_iter })
}

fn diameter(points: &[Complex]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}
