//! Numerical laboratory for the exponential family `f(z) = lambda * exp(z)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`orbit`] evaluates the map, its inverse branches and the orbit of the
//!   singular value `0` with an explicit escape policy.
//! * [`derivatives`] accumulates phase derivatives in log-scaled form, the
//!   parameter derivative of the singular orbit, summability partial sums,
//!   the Levin-constant estimate and transversality ratios.
//! * [`classify`] turns a parameter into a budgeted verdict (attracting cycle,
//!   escaping, non-recurrence candidate, undecided).
//! * [`hyperbolic`] searches for and certifies hyperbolic parameters near a
//!   seed with disk-enclosure chains.
//! * [`motion`] tracks post-singular points under parameter changes by
//!   inverse-branch pullbacks and runs the distortion experiments.
//! * [`measure`] runs seeded Monte-Carlo density scans.
//! * [`render`] rasterises parameter and dynamical planes into PPM images.

pub mod classify;
pub mod derivatives;
pub mod hyperbolic;
pub mod measure;
pub mod motion;
pub mod orbit;
pub mod render;
pub mod scaled;

pub use num_complex::Complex64 as Complex;

pub use classify::{classify_parameter, CycleInfo, ParamClass, ParamTag, Verdict, VerdictKind};
pub use derivatives::{build_ledger, DerivativeLedger, ExpansionEstimate, LedgerEntry, LevinEstimate};
pub use hyperbolic::{find_hyperbolic_near, HyperbolicWitness, SearchStrategy, TrapCertificate};
pub use measure::{density_scan, escaping_density, DensityCell, DensityReport};
pub use motion::{distortion_report, time_to_scale, track_point, verify_conjugacy, DistortionStats, MotionTrack};
pub use orbit::{singular_orbit, EscapePolicy, OrbitRecord, OrbitStatus, Param};
pub use render::{render_dynamical_plane, render_parameter_plane, write_atomic, write_ppm, ImageBuffer, Palette, ViewRect};
pub use scaled::ScaledComplex;

use std::f64::consts::PI;

pub(crate) const TAU: f64 = 2.0 * PI;

/// `exp(i * theta)`.
#[inline]
pub(crate) fn unit(theta: f64) -> Complex {
    let (s, c) = theta.sin_cos();
    Complex::new(c, s)
}

/// Reduces an angle into `[0, 2pi)`.
#[inline]
pub(crate) fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[inline]
pub(crate) fn is_finite(z: Complex) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
