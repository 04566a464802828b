//! Budgeted classification of parameters: attracting cycles found by Newton
//! refinement of a suspected cycle, escape, and Δ-non-recurrence candidacy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{raw_step, singular_orbit, EscapePolicy, OrbitRecord, OrbitStatus, Param};
use crate::orbit::MAX_RE_THRESHOLD;
use crate::scaled::ScaledComplex;
use crate::Complex;

pub const DEFAULT_REFINE_TOL: f64 = 1e-12;
/// `|multiplier| < 1 - ATTRACTING_MARGIN` is required to call a cycle attracting.
pub const ATTRACTING_MARGIN: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 60;
const SINGULAR_DERIVATIVE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("no attracting cycle found within budget")]
    NotFound,
    #[error("Newton refinement did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("Newton derivative vanished")]
    DerivativeSingular,
    #[error("delta must be positive, got {0}")]
    InvalidDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleInfo {
    pub period: usize,
    pub point: Complex,
    pub multiplier: Complex,
    pub residual: f64,
}

impl CycleInfo {
    pub fn is_attracting(&self) -> bool {
        self.multiplier.norm() < 1.0
    }
}

/// `f^p(z)` and `Df^p(z)`, or `None` if an intermediate point leaves the
/// representable range.
pub(crate) fn iterate_with_derivative(lambda: Param, z: Complex, p: usize) -> Option<(Complex, ScaledComplex)> {
    let mut w = z;
    let mut d = ScaledComplex::ONE;
    for _ in 0..p {
        if !(w.re <= MAX_RE_THRESHOLD) {
            return None;
        }
        let next = raw_step(lambda, w)?;
        // f'(w) = lambda e^w = f(w)
        d = d.mul(ScaledComplex::new(lambda.ln_modulus() + w.re, lambda.rotation(w.im)));
        w = next;
    }
    Some((w, d))
}

/// Newton's method on `F(z) = f^p(z) - z`.
pub fn newton_refine_cycle(
    lambda: Param,
    z0: Complex,
    p: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CycleInfo, ClassifyError> {
    let p = p.max(1);
    let mut z = z0;
    for _ in 0..=max_iter {
        let (fz, d) = iterate_with_derivative(lambda, z, p).ok_or(ClassifyError::NoConvergence(max_iter))?;
        let residual = (fz - z).norm();
        if residual < tol {
            return Ok(CycleInfo {
                period: p,
                point: z,
                multiplier: d.to_complex().unwrap_or(Complex::new(f64::MAX, 0.0)),
                residual,
            });
        }
        let Some(dc) = d.to_complex() else {
            return Err(ClassifyError::NoConvergence(max_iter));
        };
        let fprime = dc - 1.0;
        if fprime.norm() < SINGULAR_DERIVATIVE {
            return Err(ClassifyError::DerivativeSingular);
        }
        z -= (fz - z) / fprime;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(ClassifyError::NoConvergence(max_iter));
        }
    }
    Err(ClassifyError::NoConvergence(max_iter))
}

fn refine_suspected(record: &OrbitRecord, refine_tol: f64) -> Option<CycleInfo> {
    let OrbitStatus::CycleSuspected { period, .. } = record.status else {
        return None;
    };
    let cycle = newton_refine_cycle(record.lambda, record.last(), period, refine_tol, NEWTON_MAX_ITER).ok()?;
    (cycle.multiplier.norm() < 1.0 - ATTRACTING_MARGIN).then_some(cycle)
}

/// Attracting cycle of `f_lambda`, located through the singular orbit.
///
/// The singular value is the only one, so any attracting cycle attracts it;
/// the cycle found here is therefore the one that matters.
pub fn detect_attracting_cycle(
    lambda: Param,
    policy: &EscapePolicy,
    refine_tol: f64,
) -> Result<CycleInfo, ClassifyError> {
    refine_suspected(&singular_orbit(lambda, policy), refine_tol).ok_or(ClassifyError::NotFound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    HoldsWithinBudget,
    ViolatedAt { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub delta: f64,
    pub budget: usize,
}

/// Scans `zeta_1, zeta_2, ...` for the first point inside `D(0, delta)`.
pub fn is_delta_nonrecurrent(record: &OrbitRecord, delta: f64) -> Result<Verdict, ClassifyError> {
    if !(delta > 0.0) {
        return Err(ClassifyError::InvalidDelta(delta));
    }
    let kind = record
        .points
        .iter()
        .skip(1)
        .find(|p| p.value.norm() < delta)
        .map_or(VerdictKind::HoldsWithinBudget, |p| VerdictKind::ViolatedAt { step: p.index });
    Ok(Verdict {
        kind,
        delta,
        budget: record.policy.max_iter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ParamTag {
    Attracting { cycle: CycleInfo },
    Escaping { at_index: usize },
    #[serde(rename = "nr_candidate")]
    NonRecurrentCandidate { verdict: Verdict },
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamClass {
    #[serde(flatten)]
    pub tag: ParamTag,
    pub budget: usize,
}

impl ParamClass {
    pub fn is_attracting(&self) -> bool {
        matches!(self.tag, ParamTag::Attracting { .. })
    }

    pub fn is_escaping(&self) -> bool {
        matches!(self.tag, ParamTag::Escaping { .. })
    }

    pub fn is_candidate(&self) -> bool {
        matches!(self.tag, ParamTag::NonRecurrentCandidate { .. })
    }

    pub fn label(&self) -> &'static str {
        match self.tag {
            ParamTag::Attracting { .. } => "attracting",
            ParamTag::Escaping { .. } => "escaping",
            ParamTag::NonRecurrentCandidate { .. } => "nr_candidate",
            ParamTag::Undecided => "undecided",
        }
    }
}

/// Classification of an already computed singular orbit.
pub fn classify_record(record: &OrbitRecord, delta: f64) -> Result<ParamClass, ClassifyError> {
    let budget = record.policy.max_iter;
    let verdict = is_delta_nonrecurrent(record, delta)?;
    let tag = if let Some(cycle) = refine_suspected(record, DEFAULT_REFINE_TOL) {
        ParamTag::Attracting { cycle }
    } else if let Some(at_index) = record.escaped_at() {
        ParamTag::Escaping { at_index }
    } else if verdict.kind == VerdictKind::HoldsWithinBudget {
        ParamTag::NonRecurrentCandidate { verdict }
    } else {
        ParamTag::Undecided
    };
    Ok(ParamClass { tag, budget })
}

/// Precedence: attracting, escaping, non-recurrence candidate, undecided.
pub fn classify_parameter(lambda: Param, policy: &EscapePolicy, delta: f64) -> Result<ParamClass, ClassifyError> {
    classify_record(&singular_orbit(lambda, policy), delta)
}
