//! Numerical kernels shared by the physics modules: bracketing root search,
//! adaptive Gauss-Kronrod quadrature, an embedded Runge-Kutta pair with dense
//! output, and underflow-safe products of cosines.

pub mod logdomain;
pub mod ode;
pub mod quadrature;
pub mod roots;

pub use logdomain::LogAmplitude;

/// Neumaier's compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Inverse hyperbolic tangent via the log form, with the argument clamped to
/// `1 - 1e-15` in magnitude.
pub fn atanh_clamped(x: f64) -> f64 {
    const LIMIT: f64 = 1.0 - 1e-15;
    let x = x.clamp(-LIMIT, LIMIT);
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn atanh_matches_std_inside_and_stays_finite_at_one() {
        for x in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            assert!((atanh_clamped(x) - f64::atanh(x)).abs() < 1e-14);
        }
        assert!(atanh_clamped(1.0).is_finite());
        assert!(atanh_clamped(-1.0) < -17.0);
    }
}
