//! Registration: relaxation of the pointer magnetization in each diagonal
//! sector under
//!
//! `dm/dt = (gamma / hbar) h (1 - m / tanh(h / T))`, `h = s g + J m^3`,
//!
//! starting from the paramagnet `m = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Sector, HBAR};
use crate::numerics::ode::{DenseStep, Dopri5, OdeOptions};
use crate::numerics::quadrature::{integrate_panels, integrate_to_infinity, QuadOptions};
use crate::numerics::atanh_clamped;
use crate::output::fmt_f64;
use crate::statics::{self, PhaseLabel};

/// Below this `|h|`, `h / tanh(h/T)` is replaced by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-8;
/// Beyond this `|m|` the integration variable becomes `u = atanh(m)`.
pub const SATURATION_SWITCH: f64 = 0.99;

fn field(m: f64, sector: Sector, params: &ModelParams) -> f64 {
    sector.sign() * params.coupling_g + params.coupling_j * m.powi(3)
}

/// `h / tanh(h / T)`, continuous through `h = 0`.
fn h_coth(h: f64, temperature: f64) -> f64 {
    if h.abs() < SERIES_THRESHOLD {
        let x2 = (h / temperature).powi(2);
        temperature * (1.0 + x2 / 3.0 - x2 * x2 / 45.0)
    } else {
        h / (h / temperature).tanh()
    }
}

/// `dm/dt` in sector `s`.
pub fn registration_rhs(m: f64, sector: Sector, params: &ModelParams) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(Error::Domain { value: m, domain: "|m| < 1" });
    }
    Ok(rhs_m(m, sector, params))
}

fn rhs_m(m: f64, sector: Sector, params: &ModelParams) -> f64 {
    let h = field(m, sector, params);
    params.gamma / HBAR * (h - m * h_coth(h, params.temperature))
}

/// `du/dt` for `u = atanh(m)`. Writing `1 - tanh u / tanh x` as
/// `sinh(x - u) / (sinh x cosh u)` avoids the cancellation near saturation.
fn rhs_u(u: f64, sector: Sector, params: &ModelParams) -> f64 {
    let m = u.tanh();
    let h = field(m, sector, params);
    let x = h / params.temperature;
    if h.abs() < SERIES_THRESHOLD {
        return rhs_m(m, sector, params) * u.cosh().powi(2);
    }
    params.gamma / HBAR * h * (x - u).sinh() * u.cosh() / x.sinh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "m")]
pub enum Terminal {
    ConvergedFerro(f64),
    TrappedParamagnetic(f64),
    MaxTimeReached,
}

impl Terminal {
    pub fn name(&self) -> &'static str {
        match self {
            Terminal::ConvergedFerro(_) => "ConvergedFerro",
            Terminal::TrappedParamagnetic(_) => "TrappedParamagnetic",
            Terminal::MaxTimeReached => "MaxTimeReached",
        }
    }

    pub fn m_final(&self) -> Option<f64> {
        match *self {
            Terminal::ConvergedFerro(m) | Terminal::TrappedParamagnetic(m) => Some(m),
            Terminal::MaxTimeReached => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variable {
    M,
    U,
}

/// Accepted steps of one registration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagnetizationTrajectory {
    pub sector: Sector,
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub dm_dt: Vec<f64>,
    pub free_energy: Vec<f64>,
    /// Sector weight `zeta_0,ii`, integrated alongside `m`.
    pub zeta0: Vec<f64>,
    pub terminal: Terminal,
    #[serde(skip)]
    dense: Vec<(Variable, DenseStep<2>)>,
}

impl MagnetizationTrajectory {
    pub fn final_m(&self) -> f64 {
        *self.m.last().expect("trajectory has its initial point")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "m", "dm_dt", "F"])?;
        for i in 0..self.times.len() {
            w.write_record([fmt_f64(self.times[i]), fmt_f64(self.m[i]), fmt_f64(self.dm_dt[i]), fmt_f64(self.free_energy[i])])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegistrationOptions {
    pub t_max: f64,
    /// Distance to a stationary point at which the run is declared converged.
    pub epsilon: f64,
    pub ode: OdeOptions,
}

impl RegistrationOptions {
    /// `t_max` of `10^3 / gamma` and convergence at `1e-9`.
    pub fn for_params(params: &ModelParams) -> Self {
        let t_max = if params.gamma > 0.0 { 1e3 * HBAR / params.gamma } else { 1e6 };
        Self { t_max, epsilon: 1e-9, ode: OdeOptions::default() }
    }
}

/// Integrates from the paramagnet `m = 0`.
pub fn integrate_registration(sector: Sector, params: &ModelParams, opts: RegistrationOptions) -> Result<MagnetizationTrajectory> {
    integrate_registration_from(sector, params, 0.0, opts)
}

/// Integrates from `m0` until `m` is within `epsilon` of a minimum of the
/// free energy, or until `t_max`.
pub fn integrate_registration_from(
    sector: Sector,
    params: &ModelParams,
    m0: f64,
    opts: RegistrationOptions,
) -> Result<MagnetizationTrajectory> {
    if !(opts.t_max > 0.0) {
        return Err(Error::InvalidParameter { name: "t_max", reason: "must be positive".into() });
    }
    if !(m0.abs() < 1.0) {
        return Err(Error::Domain { value: m0, domain: "|m| < 1" });
    }
    let landscape = statics::stationary_magnetizations(sector, params)?;
    let minima: Vec<(f64, PhaseLabel)> = landscape.minima().map(|p| (p.m, p.label)).collect();
    let classify = |m: f64| {
        minima.iter().find(|(mp, _)| (m - mp).abs() < opts.epsilon).map(|&(mp, label)| match label {
            PhaseLabel::Paramagnetic => Terminal::TrappedParamagnetic(mp),
            _ => Terminal::ConvergedFerro(mp),
        })
    };

    let mut traj = MagnetizationTrajectory {
        sector,
        times: Vec::new(),
        m: Vec::new(),
        dm_dt: Vec::new(),
        free_energy: Vec::new(),
        zeta0: Vec::new(),
        terminal: Terminal::MaxTimeReached,
        dense: Vec::new(),
    };
    let record = |traj: &mut MagnetizationTrajectory, t: f64, m: f64, zeta0: f64| -> Result<()> {
        traj.times.push(t);
        traj.m.push(m);
        traj.dm_dt.push(rhs_m(m, sector, params));
        traj.free_energy.push(statics::free_energy(m, sector, params)?);
        traj.zeta0.push(zeta0);
        Ok(())
    };
    record(&mut traj, 0.0, m0, 1.0)?;
    if let Some(term) = classify(m0) {
        traj.terminal = term;
        return Ok(traj);
    }

    let (mut t, mut m, mut zeta0) = (0.0, m0, 1.0);
    if m.abs() <= SATURATION_SWITCH {
        let f = |_t: f64, y: &[f64; 2]| [rhs_m(y[0].clamp(-1.0 + 1e-16, 1.0 - 1e-16), sector, params), 0.0];
        let mut solver = Dopri5::new(f, t, [m, zeta0], opts.ode);
        while solver.t() < opts.t_max {
            let step = solver.step(opts.t_max)?;
            let y = *solver.y();
            traj.dense.push((Variable::M, step));
            record(&mut traj, solver.t(), y[0], y[1])?;
            if let Some(term) = classify(y[0]) {
                traj.terminal = term;
                return Ok(traj);
            }
            if y[0].abs() > SATURATION_SWITCH {
                break;
            }
        }
        t = solver.t();
        m = solver.y()[0];
        zeta0 = solver.y()[1];
        if t >= opts.t_max {
            return Ok(traj);
        }
    }

    let f = |_t: f64, y: &[f64; 2]| [rhs_u(y[0], sector, params), 0.0];
    let mut solver = Dopri5::new(f, t, [atanh_clamped(m), zeta0], opts.ode);
    while solver.t() < opts.t_max {
        let step = solver.step(opts.t_max)?;
        let y = *solver.y();
        let m = y[0].tanh();
        traj.dense.push((Variable::U, step));
        record(&mut traj, solver.t(), m, y[1])?;
        if let Some(term) = classify(m) {
            traj.terminal = term;
            return Ok(traj);
        }
    }
    Ok(traj)
}

/// Least-squares decay rate of `m_f - m(t)` over the converged tail, next to
/// the prediction `gamma J / hbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rate: f64,
    pub predicted: f64,
    pub points: usize,
    pub decades: f64,
}

/// Tail window on `|m_f - m|`.
const TAIL_UPPER: f64 = 1e-3;
const TAIL_LOWER: f64 = 1e-8;

pub fn asymptotic_rate(traj: &MagnetizationTrajectory, params: &ModelParams) -> Result<TailFit> {
    let m_f = match traj.terminal {
        Terminal::ConvergedFerro(m) => m,
        _ => return Err(Error::InsufficientTail { decades: 0.0 }),
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (t, m) in traj.times.iter().zip(&traj.m) {
        let d = (m_f - m).abs();
        if d <= TAIL_UPPER && d >= TAIL_LOWER {
            xs.push(*t);
            ys.push(d.ln());
        }
    }
    let decades = match (ys.first(), ys.last()) {
        (Some(a), Some(b)) => (a - b) / std::f64::consts::LN_10,
        _ => 0.0,
    };
    if xs.len() < 3 || decades < 1.0 {
        return Err(Error::InsufficientTail { decades });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(TailFit { rate: -sxy / sxx, predicted: params.gamma * params.coupling_j / HBAR, points: xs.len(), decades })
}

/// `delta = 2 (g - g_c) / g_c` with the low-temperature `g_c`.
fn reduced_excess(params: &ModelParams) -> Result<(f64, f64)> {
    let g_c = statics::critical_coupling_low_t(params);
    if params.coupling_g <= g_c {
        return Err(Error::CriticalOrSubcritical { g: params.coupling_g, g_c });
    }
    Ok((2.0 * (params.coupling_g - g_c) / g_c, g_c))
}

/// `int_0^inf dx / ((x-1)^2 (x+2) + delta)`.
pub fn bottleneck_integral(delta: f64) -> Result<f64> {
    let f = |x: f64| 1.0 / ((x - 1.0).powi(2) * (x + 2.0) + delta);
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 4000 };
    let width = (delta / 3.0).sqrt().min(0.5);
    let near = integrate_panels(f, 1.0 - width, 1.0 + width, 4, opts)?.value;
    let left = integrate_panels(f, 0.0, 1.0 - width, 4, opts)?.value;
    let right = integrate_panels(f, 1.0 + width, 2.0, 4, opts)?.value;
    let tail = integrate_to_infinity(f, 2.0, opts)?.value;
    Ok(left + near + right + tail)
}

/// `tau_reg = (3 hbar / gamma T) int_0^inf dx / ((x-1)^2 (x+2) + 2(g-g_c)/g_c)`
/// with `g_c = (2T/3) sqrt(T/3J)`.
pub fn registration_time_quadrature(params: &ModelParams) -> Result<f64> {
    let (delta, _) = reduced_excess(params)?;
    if params.gamma == 0.0 {
        return Err(Error::ZeroBathCoupling);
    }
    Ok(3.0 * HBAR / (params.gamma * params.temperature) * bottleneck_integral(delta)?)
}

/// `tau_reg = (pi hbar / gamma T) sqrt(3 g_c / 2(g - g_c))`.
pub fn registration_time_asymptotic(params: &ModelParams) -> Result<f64> {
    let (delta, _) = reduced_excess(params)?;
    if params.gamma == 0.0 {
        return Err(Error::ZeroBathCoupling);
    }
    Ok(std::f64::consts::PI * HBAR / (params.gamma * params.temperature) * (3.0 / delta).sqrt())
}

/// Registration threshold `4 sqrt(T / 3J)`, well past the bottleneck.
pub fn registration_threshold(params: &ModelParams) -> f64 {
    4.0 * (params.temperature / (3.0 * params.coupling_j)).sqrt()
}

/// First time `|m(t)|` reaches `|m_target|`, located by bisection on the
/// dense output of the step that brackets it.
pub fn crossing_time(traj: &MagnetizationTrajectory, m_target: f64) -> Result<f64> {
    let target = m_target.abs();
    let reached = |m: f64| m.abs() >= target;
    if reached(traj.m[0]) {
        return Ok(traj.times[0]);
    }
    let idx = traj.m.iter().position(|&m| reached(m)).ok_or(Error::NeverCrossed { target: m_target })?;
    let (t0, t1) = (traj.times[idx - 1], traj.times[idx]);
    if let Some((var, step)) = traj.dense.get(idx - 1) {
        let g = |y: &[f64; 2]| {
            let m = match var {
                Variable::M => y[0],
                Variable::U => y[0].tanh(),
            };
            m.abs() - target
        };
        if let Some(t) = step.locate(g, 1e-12 * t1.max(1.0)) {
            return Ok(t);
        }
    }
    let (m0, m1) = (traj.m[idx - 1].abs(), traj.m[idx].abs());
    Ok(t0 + (t1 - t0) * (target - m0) / (m1 - m0))
}

/// The per-sector summary written next to each trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    pub sector: Sector,
    pub terminal: String,
    pub m_final: Option<f64>,
    pub tau_reg_quadrature: Option<f64>,
    pub tau_reg_asymptotic: Option<f64>,
    pub threshold: f64,
    pub crossing_time: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub predicted_rate: f64,
    pub steps: usize,
}

pub fn summarize(traj: &MagnetizationTrajectory, params: &ModelParams) -> RegistrationSummary {
    let threshold = registration_threshold(params);
    RegistrationSummary {
        sector: traj.sector,
        terminal: traj.terminal.name().to_string(),
        m_final: traj.terminal.m_final(),
        tau_reg_quadrature: registration_time_quadrature(params).ok(),
        tau_reg_asymptotic: registration_time_asymptotic(params).ok(),
        threshold,
        crossing_time: crossing_time(traj, threshold).ok(),
        fitted_rate: asymptotic_rate(traj, params).ok().map(|f| f.rate),
        predicted_rate: params.gamma * params.coupling_j / HBAR,
        steps: traj.times.len() - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64, t: f64) -> ModelParams {
        ModelParams { coupling_g: g, temperature: t, ..ModelParams::reference() }
    }

    fn run(sector: Sector, p: &ModelParams) -> MagnetizationTrajectory {
        integrate_registration(sector, p, RegistrationOptions::for_params(p)).unwrap()
    }

    #[test]
    fn rhs_at_the_paramagnet_is_the_coupling() {
        let p = params(0.09, 0.34);
        assert!((registration_rhs(0.0, Sector::Up, &p).unwrap() - p.gamma * 0.09).abs() < 1e-18);
        assert!((registration_rhs(0.0, Sector::Down, &p).unwrap() + p.gamma * 0.09).abs() < 1e-18);
        assert!(matches!(registration_rhs(1.0, Sector::Up, &p), Err(Error::Domain { .. })));
    }

    #[test]
    fn rhs_vanishes_at_stationary_points() {
        let p = params(0.05, 0.34);
        let l = statics::stationary_magnetizations(Sector::Up, &p).unwrap();
        for s in &l.points {
            assert!(registration_rhs(s.m, Sector::Up, &p).unwrap().abs() < 1e-12 * p.gamma);
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        let t = 0.34;
        let below = h_coth(SERIES_THRESHOLD * (1.0 - 1e-12), t);
        let above = h_coth(SERIES_THRESHOLD * (1.0 + 1e-12), t);
        assert!((below - above).abs() < 1e-15 * t);
        assert_eq!(h_coth(0.0, t), t);
        assert_eq!(registration_rhs(0.0, Sector::Up, &params(0.0, t)).unwrap(), 0.0);
    }

    #[test]
    fn u_form_matches_m_form() {
        let p = params(0.09, 0.34);
        for m in [0.3, 0.95, 0.99, 0.996] {
            let u = atanh_clamped(m);
            let via_u = rhs_u(u, Sector::Up, &p) * (1.0 - m * m);
            let direct = rhs_m(m, Sector::Up, &p);
            assert!((via_u - direct).abs() < 1e-12 * p.gamma, "{m}");
        }
    }

    #[test]
    fn rate_minimum_in_the_low_temperature_regime() {
        let t = 0.05;
        let gc = statics::critical_coupling(&params(0.0, t)).unwrap();
        let p = params(1.2 * gc, t);
        let (mut best, mut at) = (f64::INFINITY, 0.0);
        for k in 1..50_000 {
            let m = 0.5 * k as f64 / 50_000.0;
            let r = registration_rhs(m, Sector::Up, &p).unwrap() / p.gamma;
            if r < best {
                best = r;
                at = m;
            }
        }
        let target = p.coupling_g - gc;
        assert!((best / target - 1.0).abs() < 0.05, "{best} vs {target}");
        assert!((at * at / (t / 3.0) - 1.0).abs() < 0.1, "{at}");
    }

    #[test]
    fn bottleneck_landmark() {
        let t = 0.02;
        let gc = statics::critical_coupling(&params(0.0, t)).unwrap();
        let p = params(gc * (1.0 + 1e-6), t);
        let (mut best, mut at) = (f64::NEG_INFINITY, 0.0);
        for k in 1..20_000 {
            let m = 0.5 + 0.5 * k as f64 / 20_000.0;
            let r = registration_rhs(m, Sector::Up, &p).unwrap() / p.gamma;
            if r > best {
                best = r;
                at = m;
            }
        }
        assert!((best / (27.0 / 256.0) - 1.0).abs() < 0.05, "{best}");
        assert!((at - 0.75).abs() < 0.05, "{at}");
    }

    #[test]
    fn reference_point_registers_in_both_sectors() {
        let p = params(0.09, 0.34);
        let up = run(Sector::Up, &p);
        let down = run(Sector::Down, &p);
        let Terminal::ConvergedFerro(mu) = up.terminal else { panic!("{:?}", up.terminal) };
        assert!((mu - 0.996).abs() < 1e-3);
        assert_eq!(down.terminal, Terminal::ConvergedFerro(-mu));
        for (a, b) in up.m.iter().zip(&down.m) {
            assert_eq!(*a, -*b);
        }
        assert!(up.m.windows(2).all(|w| w[1] >= w[0]));
        assert!(up.free_energy.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(up.zeta0.iter().all(|&z| (z - 1.0).abs() < 1e-10));
    }

    #[test]
    fn weak_coupling_is_trapped() {
        let p = params(0.05, 0.34);
        let tr = run(Sector::Up, &p);
        let Terminal::TrappedParamagnetic(mp) = tr.terminal else { panic!("{:?}", tr.terminal) };
        let l = statics::stationary_magnetizations(Sector::Up, &p).unwrap();
        assert_eq!(mp, l.paramagnetic().unwrap().m);
        assert!((mp - 0.05 / 0.34).abs() < 0.015);
    }

    #[test]
    fn switching_the_coupling_off_keeps_the_record() {
        let p = params(0.0, 0.34);
        for m0 in [0.7, 0.9, 0.995, -0.8] {
            let tr = integrate_registration_from(Sector::Up, &p, m0, RegistrationOptions::for_params(&p)).unwrap();
            let Terminal::ConvergedFerro(m) = tr.terminal else { panic!("{:?}", tr.terminal) };
            assert_eq!(m.signum(), m0.signum());
            assert!((m.abs() - 0.9938).abs() < 1e-3, "{m}");
        }
    }

    #[test]
    fn tail_rate_follows_the_coupling() {
        let p = params(0.09, 0.34);
        let fit = asymptotic_rate(&run(Sector::Up, &p), &p).unwrap();
        assert!((fit.rate / fit.predicted - 1.0).abs() < 0.25, "{fit:?}");
        assert!(fit.decades > 4.0);
        let p2 = ModelParams { gamma: 2.0 * p.gamma, ..p };
        let fit2 = asymptotic_rate(&run(Sector::Up, &p2), &p2).unwrap();
        assert!((fit2.rate / fit.rate - 2.0).abs() < 1e-3);
    }

    #[test]
    fn tail_needs_convergence() {
        let p = params(0.09, 0.34);
        let short = RegistrationOptions { t_max: 100.0, ..RegistrationOptions::for_params(&p) };
        let tr = integrate_registration(Sector::Up, &p, short).unwrap();
        assert_eq!(tr.terminal, Terminal::MaxTimeReached);
        assert!(matches!(asymptotic_rate(&tr, &p), Err(Error::InsufficientTail { .. })));
    }

    #[test]
    fn registration_time_closed_forms() {
        let t = 0.2;
        let base = params(0.0, t);
        let gc = statics::critical_coupling_low_t(&base);
        let near = params(1.02 * gc, t);
        let q = registration_time_quadrature(&near).unwrap();
        let a = registration_time_asymptotic(&near).unwrap();
        assert!((q / a - 1.0).abs() < 0.05, "{q} {a}");
        let quad = params(gc * (1.0 + 0.08), t);
        assert!((registration_time_asymptotic(&quad).unwrap() * 2.0 / a - 1.0).abs() < 1e-12);
        assert!(matches!(registration_time_quadrature(&params(gc, t)), Err(Error::CriticalOrSubcritical { .. })));
        assert!(matches!(registration_time_asymptotic(&params(0.5 * gc, t)), Err(Error::CriticalOrSubcritical { .. })));
    }

    #[test]
    fn bottleneck_integral_against_a_plain_rule() {
        // delta = 4 is smooth enough for a fine composite Simpson rule on
        // [0, 200] plus the analytic x^-3 tail.
        let f = |x: f64| 1.0 / ((x - 1.0).powi(2) * (x + 2.0) + 4.0);
        let (a, b, n) = (0.0, 200.0, 400_000);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        let simpson = s * h / 3.0 + 1.0 / (2.0 * b * b);
        assert!((bottleneck_integral(4.0).unwrap() / simpson - 1.0).abs() < 1e-6);
    }

    #[test]
    fn crossing_times() {
        let p = params(0.09, 0.34);
        let tr = run(Sector::Up, &p);
        assert_eq!(crossing_time(&tr, 0.0).unwrap(), 0.0);
        let tc = crossing_time(&tr, 0.5).unwrap();
        let i = tr.m.iter().position(|&m| m >= 0.5).unwrap();
        assert!(tr.times[i - 1] <= tc && tc <= tr.times[i]);
        assert!(matches!(crossing_time(&tr, 0.999), Err(Error::NeverCrossed { .. })));
        let down = run(Sector::Down, &p);
        assert_eq!(crossing_time(&down, 0.5).unwrap(), tc);
    }
}
