//! Dormand-Prince 5(4) embedded Runge-Kutta pair with step size control and
//! the fourth-order continuous extension for dense output.
//!
//! The stepper is exposed directly so callers can watch each accepted step
//! (events, variable switches, stop conditions); [`integrate`] wraps it for
//! the plain "solve to `t_end`" case.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_init: None, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const D: usize> {
    pub t0: f64,
    pub h: f64,
    rc: [[f64; D]; 5],
}

impl<const D: usize> DenseStep<D> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> [f64; D] {
        self.rc[0]
    }

    pub fn y1(&self) -> [f64; D] {
        let mut y = [0.0; D];
        for i in 0..D {
            y[i] = self.rc[0][i] + self.rc[1][i];
        }
        y
    }

    /// Interpolated state at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> [f64; D] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; D];
        for i in 0..D {
            let r = &self.rc;
            y[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }

    /// First `t` in the step where `g(y(t))` changes sign, located by
    /// bisection on the dense output.
    pub fn locate<G: Fn(&[f64; D]) -> f64>(&self, g: G, ttol: f64) -> Option<f64> {
        let (mut a, mut b) = (self.t0, self.t1());
        let ga = g(&self.eval(a));
        let gb = g(&self.eval(b));
        if ga == 0.0 {
            return Some(a);
        }
        if (ga < 0.0) == (gb < 0.0) && gb != 0.0 {
            return None;
        }
        for _ in 0..200 {
            if (b - a).abs() <= ttol {
                break;
            }
            let m = 0.5 * (a + b);
            let gm = g(&self.eval(m));
            if gm == 0.0 {
                return Some(m);
            }
            if (gm < 0.0) == (ga < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

pub struct Dopri5<F, const D: usize>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    f: F,
    t: f64,
    y: [f64; D],
    k1: [f64; D],
    h: f64,
    opts: OdeOptions,
    accepted: usize,
    rejected: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

impl<F, const D: usize> Dopri5<F, D>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    pub fn new(mut f: F, t0: f64, y0: [f64; D], opts: OdeOptions) -> Self {
        let k1 = f(t0, &y0);
        let mut s = Self { f, t: t0, y: y0, k1, h: 0.0, opts, accepted: 0, rejected: 0 };
        s.h = opts.h_init.unwrap_or_else(|| s.initial_step()).min(opts.h_max);
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; D] {
        &self.y
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    // Hairer-Wanner starting step heuristic.
    fn initial_step(&mut self) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..D {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / D as f64).sqrt(), (d1 / D as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let f1 = (self.f)(self.t + h0, &y1);
        let mut d2 = 0.0;
        for i in 0..D {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - self.k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / D as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1)
    }

    /// Advances by one accepted step, never past `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep<D>> {
        let mut rejected_here = 0usize;
        loop {
            if self.accepted + self.rejected >= self.opts.max_steps {
                return Err(Error::StepFailure { t: self.t, reason: "step budget exhausted".into() });
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < self.opts.h_min && !last {
                return Err(Error::StepFailure { t: self.t, reason: format!("step size {h:e} below minimum") });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = &mut self.f;
            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y_new);

            let mut err = 0.0;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / D as f64).sqrt();
            if !err.is_finite() {
                self.rejected += 1;
                rejected_here += 1;
                self.h = h * 0.1;
                if rejected_here > 50 {
                    return Err(Error::StepFailure { t, reason: "non-finite error estimate".into() });
                }
                continue;
            }

            if err <= 1.0 {
                let mut rc = [[0.0; D]; 5];
                for i in 0..D {
                    let dy = y_new[i] - y[i];
                    rc[0][i] = y[i];
                    rc[1][i] = dy;
                    rc[2][i] = h * k1[i] - dy;
                    rc[3][i] = dy - h * k7[i] - rc[2][i];
                    rc[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                self.t = if last { t_end } else { t + h };
                self.y = y_new;
                self.k1 = k7;
                self.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let fac = if rejected_here > 0 { fac.min(1.0) } else { fac };
                // Keep the pre-truncation step when the last step was clipped.
                if !last {
                    self.h = h * fac;
                }
                return Ok(DenseStep { t0: t, h, rc });
            }
            self.rejected += 1;
            rejected_here += 1;
            self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}

/// Accepted-step samples of a solution.
#[derive(Debug, Clone)]
pub struct Solution<const D: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; D]>,
    pub steps: Vec<DenseStep<D>>,
}

impl<const D: usize> Solution<D> {
    /// Dense-output evaluation anywhere inside the integrated span.
    pub fn eval(&self, t: f64) -> Option<[f64; D]> {
        let first = self.steps.first()?;
        if t < first.t0 {
            return None;
        }
        let idx = self.steps.partition_point(|s| s.t1() < t);
        self.steps.get(idx).map(|s| s.eval(t))
    }
}

pub fn integrate<F, const D: usize>(f: F, t0: f64, y0: [f64; D], t_end: f64, opts: OdeOptions) -> Result<Solution<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let mut solver = Dopri5::new(f, t0, y0, opts);
    let mut sol = Solution { t: vec![t0], y: vec![y0], steps: Vec::new() };
    while solver.t() < t_end {
        let step = solver.step(t_end)?;
        sol.t.push(solver.t());
        sol.y.push(*solver.y());
        sol.steps.push(step);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, OdeOptions::default()).unwrap();
        let last = sol.y.last().unwrap()[0];
        assert!((last - (-5.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_and_dense_output() {
        let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, ..OdeOptions::default() };
        let sol = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], 10.0, opts).unwrap();
        for k in 0..200 {
            let t = 0.05 * k as f64;
            let y = sol.eval(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-8, "t = {t}");
            assert!((y[1] + t.sin()).abs() < 1e-8, "t = {t}");
        }
        let y = sol.y.last().unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn non_autonomous_polynomial_is_exact() {
        // y' = 4 t^3 -> y = t^4; fifth order integrates quartics exactly.
        let sol = integrate(|t, _: &[f64; 1]| [4.0 * t * t * t], 0.0, [0.0], 2.0, OdeOptions::default()).unwrap();
        assert!((sol.y.last().unwrap()[0] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn event_location_on_dense_output() {
        let mut solver = Dopri5::new(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], OdeOptions::default());
        let target = 0.3;
        loop {
            let step = solver.step(10.0).unwrap();
            if let Some(t) = step.locate(|y| y[0] - target, 1e-13) {
                assert!((t - (1.0 / target).ln()).abs() < 1e-8);
                break;
            }
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let opts = OdeOptions { max_steps: 10_000, ..OdeOptions::default() };
        let r = integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, opts);
        assert!(r.is_err());
    }
}
