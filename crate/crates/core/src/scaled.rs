//! Complex numbers stored as `(log |z|, arg z)`.
//!
//! Derivatives along exponential orbits over- and underflow `f64` within a
//! few dozen steps, so products and sums of them are carried in this form.

use serde::{Deserialize, Serialize};

use crate::{reduce_angle, unit, Complex};

/// Log-magnitude used for an exact zero. Finite so that serialized values
/// never contain non-finite numbers.
pub const ZERO_LOG_MAG: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledComplex {
    pub log_mag: f64,
    /// Argument in `[0, 2pi)`.
    pub arg: f64,
}

impl ScaledComplex {
    pub const ZERO: ScaledComplex = ScaledComplex {
        log_mag: ZERO_LOG_MAG,
        arg: 0.0,
    };

    pub const ONE: ScaledComplex = ScaledComplex {
        log_mag: 0.0,
        arg: 0.0,
    };

    pub fn new(log_mag: f64, arg: f64) -> Self {
        if log_mag <= ZERO_LOG_MAG || log_mag == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        ScaledComplex {
            log_mag,
            arg: reduce_angle(arg),
        }
    }

    pub fn from_complex(z: Complex) -> Self {
        if z.re == 0.0 && z.im == 0.0 {
            return Self::ZERO;
        }
        // hypot keeps the magnitude finite for components near f64::MAX
        let mag = z.re.hypot(z.im);
        Self::new(mag.ln(), z.im.atan2(z.re))
    }

    pub fn is_zero(&self) -> bool {
        self.log_mag <= ZERO_LOG_MAG
    }

    /// Converts back to an ordinary complex number. Magnitudes above `f64`
    /// range saturate to `None`.
    pub fn to_complex(&self) -> Option<Complex> {
        if self.is_zero() {
            return Some(Complex::new(0.0, 0.0));
        }
        if self.log_mag > 709.0 {
            return None;
        }
        Some(unit(self.arg) * self.log_mag.exp())
    }

    pub fn mul(self, other: ScaledComplex) -> ScaledComplex {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.log_mag + other.log_mag, self.arg + other.arg)
    }

    pub fn div(self, other: ScaledComplex) -> ScaledComplex {
        assert!(!other.is_zero(), "division by scaled zero");
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.log_mag - other.log_mag, self.arg - other.arg)
    }

    pub fn recip(self) -> ScaledComplex {
        Self::ONE.div(self)
    }

    pub fn add(self, other: ScaledComplex) -> ScaledComplex {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.log_mag >= other.log_mag {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (small.log_mag - big.log_mag).exp();
        let w = Complex::new(1.0, 0.0) + unit(small.arg - big.arg) * ratio;
        if w.re == 0.0 && w.im == 0.0 {
            return Self::ZERO;
        }
        let s = Self::from_complex(w);
        Self::new(big.log_mag + s.log_mag, big.arg + s.arg)
    }

    /// Relative distance `|self / other - 1|`; `0` for two zeros and
    /// infinity when exactly one side is zero.
    pub fn rel_diff(self, other: ScaledComplex) -> f64 {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => f64::INFINITY,
            _ => {
                let q = self.div(other);
                match q.to_complex() {
                    Some(c) => (c - Complex::new(1.0, 0.0)).norm(),
                    None => f64::INFINITY,
                }
            }
        }
    }
}

impl From<Complex> for ScaledComplex {
    fn from(z: Complex) -> Self {
        Self::from_complex(z)
    }
}
