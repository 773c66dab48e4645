//! Brute-force counterparts of the closed forms, sharing no code with the
//! production paths beyond the parameter types.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelParams, HBAR};
use crate::numerics::compensated_sum;
use crate::offdiag::CouplingVector;

/// Largest `N` enumerated configuration by configuration.
pub const MAX_ENUMERATED_SPINS: usize = 20;
/// Up to this `N` the binomial weights are exact integers.
const EXACT_BINOMIAL_LIMIT: u64 = 60;

/// Levels `m_k = (2k - N)/N` of the pointer with multiplicities `C(N, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSpectrum {
    pub n_spins: u64,
    /// `ln C(N, k)` for `k = 0..=N`.
    pub ln_multiplicity: Vec<f64>,
}

impl SectorSpectrum {
    pub fn new(n_spins: u64) -> Self {
        let ln_multiplicity = if n_spins <= EXACT_BINOMIAL_LIMIT {
            let mut c: u64 = 1;
            let mut out = Vec::with_capacity(n_spins as usize + 1);
            for k in 0..=n_spins {
                out.push((c as f64).ln());
                // C(N, k+1) = C(N, k) (N - k) / (k + 1) stays integral.
                c = ((c as u128 * (n_spins - k) as u128) / (k + 1) as u128) as u64;
            }
            out
        } else {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(n_spins as usize + 1);
            out.push(0.0);
            for k in 1..=n_spins {
                acc += ((n_spins - k + 1) as f64).ln() - (k as f64).ln();
                out.push(acc);
            }
            out
        };
        Self { n_spins, ln_multiplicity }
    }

    pub fn level(&self, k: usize) -> f64 {
        (2.0 * k as f64 - self.n_spins as f64) / self.n_spins as f64
    }

    /// `ln sum_k C(N, k)`, which must equal `N ln 2`.
    pub fn ln_total(&self) -> f64 {
        let max = self.ln_multiplicity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + compensated_sum(self.ln_multiplicity.iter().map(|l| (l - max).exp())).ln()
    }
}

/// `r0 sum_k C(N,k) 2^-N exp(2ig(2k - N)t / hbar)`.
pub fn offdiag_sector_sum(t: f64, params: &ModelParams, r0: Complex64) -> Complex64 {
    let spec = SectorSpectrum::new(params.n_spins);
    let n = params.n_spins as f64;
    let ln_norm = -n * std::f64::consts::LN_2;
    let terms = spec.ln_multiplicity.iter().enumerate().map(|(k, lc)| {
        let w = (lc + ln_norm).exp();
        let phase = 2.0 * params.coupling_g * (2.0 * k as f64 - n) * t / HBAR;
        (w * phase.cos(), w * phase.sin())
    });
    let (re, im): (Vec<f64>, Vec<f64>) = terms.unzip();
    r0 * Complex64::new(compensated_sum(re), compensated_sum(im))
}

/// All subset sums of `values`, indexed by bit pattern.
fn subset_sums(values: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; 1 << values.len()];
    for (bit, v) in values.iter().enumerate() {
        let half = 1 << bit;
        for s in 0..half {
            sums[s | half] = sums[s] + v;
        }
    }
    sums
}

/// `r0 2^-N sum over all 2^N configurations of exp(2it sum_n g_n sigma_n / hbar)`.
/// Each configuration's field is assembled from two half-register subset
/// sums, so no error accumulates along the enumeration.
pub fn full_hilbert_offdiag(t: f64, couplings: &CouplingVector, r0: Complex64) -> Result<Complex64> {
    let n = couplings.len();
    if n > MAX_ENUMERATED_SPINS {
        return Err(Error::TooLarge { n: n as u64, limit: MAX_ENUMERATED_SPINS as u64 });
    }
    let (lo, hi) = couplings.values.split_at(n / 2);
    let total: f64 = couplings.values.iter().sum();
    let lo_sums = subset_sums(lo);
    let hi_sums = subset_sums(hi);
    // sigma_n = -1 for set bits: sum g_n sigma_n = total - 2 (lo + hi).
    let blocks: Vec<(f64, f64)> = hi_sums
        .par_iter()
        .map(|&h| {
            let (re, im): (Vec<f64>, Vec<f64>) = lo_sums
                .iter()
                .map(|&l| {
                    let phase = 2.0 * t * (total - 2.0 * (l + h)) / HBAR;
                    (phase.cos(), phase.sin())
                })
                .unzip();
            (compensated_sum(re), compensated_sum(im))
        })
        .collect();
    let scale = 0.5f64.powi(n as i32);
    let re = compensated_sum(blocks.iter().map(|b| b.0));
    let im = compensated_sum(blocks.iter().map(|b| b.1));
    Ok(r0 * Complex64::new(re, im) * scale)
}

/// Samples of a reference solution.
#[derive(Debug, Clone)]
pub struct Reference<const D: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; D]>,
}

/// Classical RK4 with step doubling: each step is taken once with `h` and
/// twice with `h/2`; the difference estimates the error and the Richardson
/// combination is kept. The solution is reported at every time in `at`
/// (ascending, starting at or after `t0`).
pub fn reference_integrate<F, const D: usize>(mut rhs: F, t0: f64, y0: [f64; D], at: &[f64], tol: f64) -> Result<Reference<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let mut rk4 = |t: f64, y: &[f64; D], h: f64| -> [f64; D] {
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
        let k3 = rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
        let k4 = rhs(t + h, &axpy(y, h, &k3));
        let mut out = *y;
        for i in 0..D {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    };
    let mut out = Reference { t: Vec::with_capacity(at.len()), y: Vec::with_capacity(at.len()) };
    let (mut t, mut y) = (t0, y0);
    let span = at.last().map_or(0.0, |&e| e - t0);
    let mut h = if span > 0.0 { span * 1e-4 } else { 1.0 };
    let mut steps = 0usize;
    for &target in at {
        if target < t {
            return Err(Error::StepFailure { t: target, reason: "output times must ascend".into() });
        }
        while t < target {
            steps += 1;
            if steps > 50_000_000 {
                return Err(Error::StepFailure { t, reason: "step budget exhausted".into() });
            }
            let step = h.min(target - t);
            let full = rk4(t, &y, step);
            let mid = rk4(t, &y, 0.5 * step);
            let half = rk4(t + 0.5 * step, &mid, 0.5 * step);
            let mut err: f64 = 0.0;
            for i in 0..D {
                let scale = 1.0 + half[i].abs();
                err = err.max(((half[i] - full[i]) / 15.0).abs() / scale);
            }
            if !err.is_finite() {
                return Err(Error::StepFailure { t, reason: "non-finite state".into() });
            }
            if err <= tol {
                for i in 0..D {
                    y[i] = half[i] + (half[i] - full[i]) / 15.0;
                }
                t = if step == target - t { target } else { t + step };
            }
            let factor = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 4.0) };
            if step == h || err > tol {
                h = step * factor;
            }
            if h < 1e-15 * t.abs().max(1.0) {
                return Err(Error::StepFailure { t, reason: "step size underflow".into() });
            }
        }
        out.t.push(target);
        out.y.push(y);
    }
    Ok(out)
}

fn axpy<const D: usize>(y: &[f64; D], a: f64, k: &[f64; D]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        out[i] += a * k[i];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Finite(f64, f64),
    /// `[a, inf)`; the integrand must decay faster than `1/x`.
    SemiInfinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualEstimate {
    /// Double-exponential (tanh-sinh / exp-sinh) value.
    pub value: f64,
    /// Adaptive Simpson with Richardson correction.
    pub alternate: f64,
    pub discrepancy: f64,
}

/// Integrates with two structurally different adaptive rules.
pub fn dual_quadrature<F: Fn(f64) -> f64 + Sync>(f: F, domain: Domain) -> Result<DualEstimate> {
    let value = double_exponential(&f, domain, 1e-14)?;
    let alternate = match domain {
        Domain::Finite(a, b) => adaptive_simpson(&f, a, b, 1e-13)?,
        Domain::SemiInfinite(a) => {
            let mapped = |u: f64| {
                if u >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - u;
                f(a + u / w) / (w * w)
            };
            adaptive_simpson(&mapped, 0.0, 1.0, 1e-13)?
        }
    };
    Ok(DualEstimate { value, alternate, discrepancy: (value - alternate).abs() })
}

/// Level-doubling double-exponential quadrature.
fn double_exponential<F: Fn(f64) -> f64>(f: &F, domain: Domain, tol: f64) -> Result<f64> {
    use std::f64::consts::FRAC_PI_2;
    // (x, dx/ds) as functions of the DE variable s.
    let node = |s: f64| -> (f64, f64) {
        match domain {
            Domain::Finite(a, b) => {
                let r = 0.5 * (b - a);
                let u = FRAC_PI_2 * s.sinh();
                let ch = u.cosh();
                // Distance to the nearer endpoint, kept accurate near +-1.
                let tail = 1.0 / ((1.0 + u.abs().exp().powi(2)) * 0.5);
                let x = if u >= 0.0 { b - r * tail } else { a + r * tail };
                (x, r * FRAC_PI_2 * s.cosh() / (ch * ch))
            }
            Domain::SemiInfinite(a) => {
                let e = (FRAC_PI_2 * s.sinh()).exp();
                (a + e, FRAC_PI_2 * s.cosh() * e)
            }
        }
    };
    let limit = match domain {
        Domain::Finite(..) => 3.5,
        Domain::SemiInfinite(_) => 4.5,
    };
    let eval = |s: f64| {
        let (x, w) = node(s);
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut terms: Vec<f64> = Vec::new();
    let count = (limit / h) as i64;
    for k in -count..=count {
        terms.push(eval(k as f64 * h));
    }
    let mut estimate = h * compensated_sum(terms.iter().copied());
    for _ in 0..12 {
        h *= 0.5;
        let count = (limit / h) as i64;
        for k in (-count..=count).filter(|k| k % 2 != 0) {
            terms.push(eval(k as f64 * h));
        }
        let next = h * compensated_sum(terms.iter().copied());
        if (next - estimate).abs() <= tol * next.abs().max(1e-300) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::QuadratureNotConverged { estimate, error: f64::NAN })
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32, calls: &mut usize) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        *calls += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || *calls > 20_000_000 {
            return Err(Error::QuadratureNotConverged { estimate: left + right, error: delta.abs() });
        }
        if delta.abs() <= 15.0 * tol && depth < 46 {
            return Ok(left + right + delta / 15.0);
        }
        Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, calls)?
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, calls)?)
    }
    // Start from 16 panels so narrow features are not skipped.
    let panels = 16;
    let mut total = Vec::with_capacity(panels);
    let mut calls = 0usize;
    let scale = {
        let probe: f64 = (0..=64).map(|i| f(a + (b - a) * i as f64 / 64.0).abs()).fold(0.0, f64::max);
        probe.max(1e-300) * (b - a).abs()
    };
    for p in 0..panels {
        let lo = a + (b - a) * p as f64 / panels as f64;
        let hi = if p + 1 == panels { b } else { a + (b - a) * (p + 1) as f64 / panels as f64 };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total.push(rec(f, lo, hi, fa, fm, fb, whole, tol * scale / panels as f64, 50, &mut calls)?);
    }
    Ok(compensated_sum(total))
}
