//! Decay of the off-diagonal block `r_ud(t)` of the measured spin.
//!
//! The production path is a closed-form product: the oscillation
//! `cos^N(2gt)` (or `prod_n cos(2 g_n t)` with dispersed couplings) times the
//! bath factor `exp(-N chi(t))`. Everything is carried as [`LogAmplitude`] so
//! that amplitudes like `exp(-3e7)` stay representable. The short-time `zeta`
//! equations and the memory kernel are exposed as cross-checks.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, HBAR};
use crate::numerics::logdomain::{cos_power, cos_product};
use crate::numerics::ode::{Dopri5, OdeOptions};
use crate::numerics::quadrature::{integrate_panels, QuadOptions};
use crate::numerics::{compensated_sum, LogAmplitude};
use crate::output::{fmt_f64, fmt_scaled};

/// Largest coupling vector [`sample_couplings`] will materialize.
pub const MAX_SAMPLED_SPINS: u64 = 50_000_000;

/// Per-spin operator coefficients of the off-diagonal block. Only `zeta0`
/// and `zetaz` evolve; the transverse pair stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagState {
    pub zeta0: Complex64,
    pub zetaz: Complex64,
    pub zetax: Complex64,
    pub zetay: Complex64,
}

impl OffDiagState {
    pub const INITIAL: OffDiagState = OffDiagState {
        zeta0: Complex64 { re: 1.0, im: 0.0 },
        zetaz: Complex64 { re: 0.0, im: 0.0 },
        zetax: Complex64 { re: 0.0, im: 0.0 },
        zetay: Complex64 { re: 0.0, im: 0.0 },
    };

    fn from_pair(zeta0: Complex64, zetaz: Complex64) -> Self {
        Self { zeta0, zetaz, ..Self::INITIAL }
    }
}

/// `tau_red = hbar / (g sqrt(2N))`.
pub fn reduction_time(params: &ModelParams) -> Result<f64> {
    if params.coupling_g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    Ok(HBAR / (params.coupling_g * (2.0 * params.n()).sqrt()))
}

/// Per-spin state without bath or dispersion: `(cos 2gt, i sin 2gt)`.
pub fn zeta_uniform(t: f64, params: &ModelParams) -> OffDiagState {
    let x = 2.0 * params.coupling_g * t / HBAR;
    OffDiagState::from_pair(Complex64::new(x.cos(), 0.0), Complex64::new(0.0, x.sin()))
}

/// `r0 cos^N(2gt)`.
pub fn envelope_uniform(t: f64, params: &ModelParams, r0: Complex64) -> LogAmplitude {
    LogAmplitude::from_complex(r0) * cos_power(2.0 * params.coupling_g * t / HBAR, params.n_spins)
}

/// Per-spin bath exponent `chi(t) = gamma Gamma^2 g^2 t^4 / (2 pi hbar^2)`.
/// The whole block is damped by `exp(-N chi(t)) = exp(-t^4 / tau_2^4)`.
pub fn bath_exponent(t: f64, params: &ModelParams) -> f64 {
    let ggt = params.debye_cutoff * params.coupling_g * t * t;
    params.gamma * ggt * ggt / (2.0 * std::f64::consts::PI * HBAR * HBAR)
}

/// `tau_2 = (2 pi / gamma N)^{1/4} (hbar / Gamma g)^{1/2}`.
pub fn decay_time_bath(params: &ModelParams) -> Result<f64> {
    if params.gamma == 0.0 {
        return Err(Error::ZeroBathCoupling);
    }
    if params.coupling_g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let a = 2.0 * std::f64::consts::PI / (params.gamma * params.n());
    Ok(a.powf(0.25) * (HBAR / (params.debye_cutoff * params.coupling_g)).sqrt())
}

/// `ln` of the bath suppression of the first recurrence at `t = pi hbar / 2g`:
/// `-N pi^3 gamma hbar^2 Gamma^2 / (32 g^2)`.
pub fn recurrence_ln_height_bath(params: &ModelParams) -> Result<f64> {
    if params.coupling_g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let pi3 = std::f64::consts::PI.powi(3);
    let gam = params.debye_cutoff;
    Ok(-params.n() * pi3 * params.gamma * HBAR * HBAR * gam * gam / (32.0 * params.coupling_g.powi(2)))
}

/// First recurrence time `pi hbar / 2g`.
pub fn recurrence_time(params: &ModelParams) -> Result<f64> {
    if params.coupling_g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    Ok(std::f64::consts::PI * HBAR / (2.0 * params.coupling_g))
}

/// `tau_2' = hbar / (delta_g sqrt(2N))`.
pub fn dispersion_decay_time(params: &ModelParams) -> Result<f64> {
    if params.delta_g == 0.0 {
        return Err(Error::ZeroDispersion);
    }
    Ok(HBAR / (params.delta_g * (2.0 * params.n()).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CouplingDistribution {
    /// Flat distribution; the default.
    #[default]
    Uniform,
    Gaussian,
}

/// The individual couplings `g_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector {
    pub values: Vec<f64>,
    pub mean: f64,
    pub rms_deviation: f64,
}

impl CouplingVector {
    pub fn uniform(g: f64, n: usize) -> Self {
        Self { values: vec![g; n], mean: g, rms_deviation: 0.0 }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let var = compensated_sum(values.iter().map(|g| (g - mean) * (g - mean))) / n;
        Self { values, mean, rms_deviation: var.sqrt() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `N` couplings from the default distribution, shifted and rescaled
/// so the empirical mean is `g` and the empirical RMS deviation is `delta_g`.
pub fn sample_couplings(params: &ModelParams, seed: u64) -> Result<CouplingVector> {
    sample_couplings_with(params, seed, CouplingDistribution::default())
}

pub fn sample_couplings_with(params: &ModelParams, seed: u64, dist: CouplingDistribution) -> Result<CouplingVector> {
    if params.n_spins > MAX_SAMPLED_SPINS {
        return Err(Error::TooLarge { n: params.n_spins, limit: MAX_SAMPLED_SPINS });
    }
    let n = params.n_spins as usize;
    if params.delta_g == 0.0 {
        return Ok(CouplingVector::uniform(params.coupling_g, n));
    }
    if n < 2 {
        return Err(Error::InvalidParameter { name: "n_spins", reason: "a dispersion needs at least two spins".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = match dist {
        CouplingDistribution::Uniform => {
            let u = Uniform::new(-1.0, 1.0).expect("valid range");
            (0..n).map(|_| u.sample(&mut rng)).collect()
        }
        CouplingDistribution::Gaussian => {
            let normal = Normal::new(0.0, 1.0).expect("valid sigma");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    let drawn = CouplingVector::from_values(raw);
    let scale = params.delta_g / drawn.rms_deviation;
    let values = drawn.values.iter().map(|x| params.coupling_g + scale * (x - drawn.mean)).collect();
    Ok(CouplingVector::from_values(values))
}

/// `r0 prod_n cos(2 g_n t)`.
pub fn envelope_dispersed(t: f64, couplings: &CouplingVector, r0: Complex64) -> LogAmplitude {
    LogAmplitude::from_complex(r0) * cos_product(couplings.values.iter().map(|g| 2.0 * g * t / HBAR))
}

/// Factors of one trajectory sample, each in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFactors {
    /// `cos^N(2gt)` with the mean coupling.
    pub oscillation: LogAmplitude,
    /// `exp(-N chi(t))`, or one without a bath.
    pub bath: LogAmplitude,
    /// `prod_n cos(2 g_n t) / cos^N(2gt)`, or one without dispersion.
    pub dispersion: LogAmplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagTrajectory {
    pub times: Vec<f64>,
    pub amplitude: Vec<LogAmplitude>,
    pub components: Vec<EnvelopeFactors>,
    /// Time of the refocusing pulse for echo runs.
    pub pulse_time: Option<f64>,
}

impl OffDiagTrajectory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "re_r", "im_r", "log10_abs_r", "osc_factor", "bath_factor", "dispersion_factor"])?;
        for ((t, a), c) in self.times.iter().zip(&self.amplitude).zip(&self.components) {
            w.write_record([
                fmt_f64(*t),
                fmt_scaled(a.ln_abs, a.phase.re),
                fmt_scaled(a.ln_abs, a.phase.im),
                fmt_f64(a.log10_abs()),
                fmt_scaled(c.oscillation.ln_abs, c.oscillation.phase.re),
                fmt_scaled(c.bath.ln_abs, c.bath.phase.re),
                fmt_scaled(c.dispersion.ln_abs, c.dispersion.phase.re),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest `|r(t)|` over the samples, as `ln`.
    pub fn max_ln_abs(&self) -> f64 {
        self.amplitude.iter().map(|a| a.ln_abs).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which damping mechanisms a collapse run includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanisms {
    pub bath: bool,
    pub dispersion: bool,
}

/// The production off-diagonal trajectory: oscillation times bath factor
/// times dispersion factor, evaluated independently at every sample time.
pub fn collapse_trajectory(
    params: &ModelParams,
    couplings: Option<&CouplingVector>,
    bath: bool,
    r0: Complex64,
    times: &[f64],
) -> OffDiagTrajectory {
    let r0_log = LogAmplitude::from_complex(r0);
    let samples: Vec<(LogAmplitude, EnvelopeFactors)> = times
        .par_iter()
        .map(|&t| {
            let oscillation = cos_power(2.0 * params.coupling_g * t / HBAR, params.n_spins);
            let bath_factor = if bath {
                LogAmplitude::real(-params.n() * bath_exponent(t, params), false)
            } else {
                LogAmplitude::ONE
            };
            let dispersion = match couplings {
                Some(c) => envelope_dispersed(t, c, Complex64::new(1.0, 0.0)).ratio(&oscillation),
                None => LogAmplitude::ONE,
            };
            let amp = r0_log * oscillation * dispersion * bath_factor;
            (amp, EnvelopeFactors { oscillation, bath: bath_factor, dispersion })
        })
        .collect();
    let (amplitude, components) = samples.into_iter().unzip();
    OffDiagTrajectory { times: times.to_vec(), amplitude, components, pulse_time: None }
}

/// Echo run: a pi pulse about `y` at `theta` reverses each spin's phase, so
/// for `t >= theta` the block is `r0 prod_n cos(2 g_n (t - 2 theta))`.
pub fn spin_echo(theta: f64, couplings: &CouplingVector, r0: Complex64, times: &[f64]) -> Result<OffDiagTrajectory> {
    if theta < 0.0 || !theta.is_finite() {
        return Err(Error::NegativePulseTime(theta));
    }
    let n = couplings.len() as u64;
    let r0_log = LogAmplitude::from_complex(r0);
    let samples: Vec<(LogAmplitude, EnvelopeFactors)> = times
        .par_iter()
        .map(|&t| {
            let tau = if t < theta { t } else { t - 2.0 * theta };
            let oscillation = cos_power(2.0 * couplings.mean * tau / HBAR, n);
            let full = envelope_dispersed(tau, couplings, Complex64::new(1.0, 0.0));
            let dispersion = full.ratio(&oscillation);
            (r0_log * full, EnvelopeFactors { oscillation, bath: LogAmplitude::ONE, dispersion })
        })
        .collect();
    let (amplitude, components) = samples.into_iter().unzip();
    Ok(OffDiagTrajectory { times: times.to_vec(), amplitude, components, pulse_time: Some(theta) })
}

/// Samples of the short-time `zeta` equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<OffDiagState>,
    pub warnings: Vec<String>,
}

impl ZetaTrajectory {
    /// `r0 zeta0(t)^N` at each sample.
    pub fn amplitude(&self, n_spins: u64, r0: Complex64) -> Vec<LogAmplitude> {
        let r0_log = LogAmplitude::from_complex(r0);
        self.states.iter().map(|s| r0_log * LogAmplitude::from_complex(s.zeta0).powu(n_spins)).collect()
    }
}

/// Integrates
/// `zeta0' = (2ig/hbar) zetaz`,
/// `zetaz' = (2ig/hbar)(1 + gamma Gamma^2 t^2 / 2pi) zeta0 - (gamma Gamma^2 t / pi) zetaz`
/// from `(1, 0)`, sampling every `step` up to `t_max`. The equations hold for
/// `t << 1/Gamma`; longer runs are completed with a warning.
pub fn integrate_zeta_short_time(params: &ModelParams, t_max: f64, step: f64) -> Result<ZetaTrajectory> {
    integrate_zeta_with(params, t_max, step, OdeOptions::default())
}

pub fn integrate_zeta_with(params: &ModelParams, t_max: f64, step: f64, opts: OdeOptions) -> Result<ZetaTrajectory> {
    if !(step > 0.0) || !(t_max >= 0.0) {
        return Err(Error::InvalidParameter { name: "step", reason: "need step > 0 and t_max >= 0".into() });
    }
    let mut warnings = Vec::new();
    let window = 1.0 / params.debye_cutoff;
    if t_max > window {
        warnings.push(format!("t_max = {t_max} exceeds the short-time window 1/Gamma = {window}"));
    }
    let w = 2.0 * params.coupling_g / HBAR;
    let a = params.gamma * params.debye_cutoff.powi(2) / (2.0 * std::f64::consts::PI);
    let rhs = move |t: f64, y: &[f64; 4]| {
        let (z0, zz) = (Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]));
        let i = Complex64::new(0.0, 1.0);
        let d0 = i * w * zz;
        let dz = i * w * (1.0 + a * t * t) * z0 - 2.0 * a * t * zz;
        [d0.re, d0.im, dz.re, dz.im]
    };
    let opts = OdeOptions { h_max: opts.h_max.min(step), ..opts };
    let mut solver = Dopri5::new(rhs, 0.0, [1.0, 0.0, 0.0, 0.0], opts);
    let samples = (t_max / step).round() as usize;
    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    times.push(0.0);
    states.push(OffDiagState::INITIAL);
    for k in 1..=samples {
        let target = (k as f64 * step).min(t_max);
        while solver.t() < target {
            solver.step(target).map_err(|e| match e {
                Error::StepFailure { t, .. } => Error::StepTooLarge { t, step },
                other => other,
            })?;
        }
        let y = solver.y();
        times.push(target);
        states.push(OffDiagState::from_pair(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3])));
    }
    Ok(ZetaTrajectory { times, states, warnings })
}

/// Spectral density `S(omega) = omega [coth(hbar omega / 2T) - 1] e^{-|omega|/Gamma}`.
/// At `T = 0` it vanishes for `omega > 0` and equals `2|omega| e^{-|omega|/Gamma}` below.
pub fn spectral_density(omega: f64, temperature: f64, debye_cutoff: f64) -> f64 {
    let cutoff = (-omega.abs() / debye_cutoff).exp();
    let u = omega.abs();
    let thermal = if temperature == 0.0 {
        0.0
    } else if u == 0.0 {
        2.0 * temperature / HBAR
    } else {
        2.0 * u / (HBAR * u / temperature).exp_m1()
    };
    if omega >= 0.0 {
        thermal * cutoff
    } else {
        (thermal + 2.0 * u) * cutoff
    }
}

/// Bath memory kernel
/// `K(t) = (hbar^2 / 16 pi) int d omega e^{i omega t} S(omega)`.
/// The two half-lines are folded onto `omega > 0` and integrated on panels
/// no wider than a quarter period of `cos(omega t)`.
pub fn memory_kernel(t: f64, temperature: f64, debye_cutoff: f64) -> Result<Complex64> {
    if !t.is_finite() || temperature < 0.0 || !(debye_cutoff > 0.0) {
        return Err(Error::InvalidParameter { name: "memory_kernel", reason: "need finite t, T >= 0, Gamma > 0".into() });
    }
    let upper = 50.0 * debye_cutoff;
    let per_period = (upper * t.abs() / (0.5 * std::f64::consts::PI)).ceil() as usize;
    let panels = per_period.clamp(8, 200_000);
    let opts = QuadOptions { abs_tol: 1e-14 * debye_cutoff * debye_cutoff, rel_tol: 1e-11, max_intervals: panels + 8000 };
    let even = |u: f64| (u * t).cos() * (spectral_density(u, temperature, debye_cutoff) + spectral_density(-u, temperature, debye_cutoff));
    let odd = |u: f64| (u * t).sin() * (spectral_density(u, temperature, debye_cutoff) - spectral_density(-u, temperature, debye_cutoff));
    let re = integrate_panels(even, 0.0, upper, panels, opts)?;
    let im = if t == 0.0 { 0.0 } else { integrate_panels(odd, 0.0, upper, panels, opts)?.value };
    let pref = HBAR * HBAR / (16.0 * std::f64::consts::PI);
    Ok(Complex64::new(pref * re.value, pref * im))
}

/// `K(t)` at `T = 0`: `(hbar^2 / 8 pi) / (1/Gamma + i t)^2`.
pub fn memory_kernel_zero_temperature(t: f64, debye_cutoff: f64) -> Complex64 {
    let d = Complex64::new(1.0 / debye_cutoff, t);
    HBAR * HBAR / (8.0 * std::f64::consts::PI) / (d * d)
}
