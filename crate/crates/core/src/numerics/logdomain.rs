//! Complex amplitudes stored as `(ln |z|, phase)` so that products of many
//! factors smaller than one never underflow.

use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::compensated_sum;

/// `z = exp(ln_abs) * phase` with `|phase| = 1`. An exact zero has
/// `ln_abs = -inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogAmplitude {
    pub ln_abs: f64,
    pub phase: Complex64,
}

impl LogAmplitude {
    pub const ONE: LogAmplitude = LogAmplitude { ln_abs: 0.0, phase: Complex64 { re: 1.0, im: 0.0 } };

    pub fn zero() -> Self {
        Self { ln_abs: f64::NEG_INFINITY, phase: Complex64::new(1.0, 0.0) }
    }

    pub fn from_complex(z: Complex64) -> Self {
        let r = z.norm();
        if r == 0.0 {
            Self::zero()
        } else {
            Self { ln_abs: r.ln(), phase: z / r }
        }
    }

    /// Real factor `exp(ln_abs)` with a sign.
    pub fn real(ln_abs: f64, negative: bool) -> Self {
        let s = if negative { -1.0 } else { 1.0 };
        Self { ln_abs, phase: Complex64::new(s, 0.0) }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    /// Converts to an ordinary complex number; flushes to zero below `e^-745`.
    pub fn to_complex(&self) -> Complex64 {
        self.phase * self.ln_abs.exp()
    }

    pub fn abs(&self) -> f64 {
        self.ln_abs.exp()
    }

    pub fn log10_abs(&self) -> f64 {
        self.ln_abs / std::f64::consts::LN_10
    }

    pub fn powu(&self, n: u64) -> Self {
        let nf = n as f64;
        let phase = if n == 0 { Complex64::new(1.0, 0.0) } else { unit_pow(self.phase, n) };
        Self { ln_abs: if n == 0 { 0.0 } else { self.ln_abs * nf }, phase }
    }

    /// `self / other`, with `0/0` reported as `1` (a removed common zero).
    pub fn ratio(&self, other: &LogAmplitude) -> Self {
        if self.is_zero() && other.is_zero() {
            return Self::ONE;
        }
        Self { ln_abs: self.ln_abs - other.ln_abs, phase: self.phase / other.phase }
    }
}

impl Mul for LogAmplitude {
    type Output = LogAmplitude;
    fn mul(self, rhs: LogAmplitude) -> LogAmplitude {
        LogAmplitude { ln_abs: self.ln_abs + rhs.ln_abs, phase: self.phase * rhs.phase }
    }
}

fn unit_pow(z: Complex64, n: u64) -> Complex64 {
    if z.im == 0.0 {
        // Real signs stay exact.
        let s = if z.re < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
        Complex64::new(s, 0.0)
    } else {
        let arg = z.arg() * n as f64;
        Complex64::new(arg.cos(), arg.sin())
    }
}

/// `ln |cos x|`, using `ln_1p(-2 sin^2(x/2))` where `cos x` is close to one.
pub fn ln_abs_cos(x: f64) -> f64 {
    let c = x.cos();
    if c.abs() > 0.5 && c > 0.0 {
        let s = (0.5 * x).sin();
        (-2.0 * s * s).ln_1p()
    } else if c.abs() > 0.5 {
        // cos x = -cos(x - pi); reuse the accurate branch around pi.
        let s = (0.5 * (x - std::f64::consts::PI)).sin();
        (-2.0 * s * s).ln_1p()
    } else {
        c.abs().ln()
    }
}

/// `prod_k cos(angles_k)` in log-magnitude and sign form.
pub fn cos_product<I: IntoIterator<Item = f64>>(angles: I) -> LogAmplitude {
    let mut negative = false;
    let mut zero = false;
    let logs = angles.into_iter().map(|a| {
        let c = a.cos();
        if c < 0.0 {
            negative = !negative;
        }
        if c == 0.0 {
            zero = true;
        }
        ln_abs_cos(a)
    });
    let ln_abs = compensated_sum(logs);
    if zero {
        LogAmplitude::zero()
    } else {
        LogAmplitude::real(ln_abs, negative)
    }
}

/// `cos^n(x)` in log form.
pub fn cos_power(x: f64, n: u64) -> LogAmplitude {
    let c = x.cos();
    if c == 0.0 {
        return LogAmplitude::zero();
    }
    LogAmplitude::real(n as f64 * ln_abs_cos(x), c < 0.0 && n % 2 == 1)
}
