//! A complete measurement run, from the regime check to the entropy balance.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{validate_regime, validate_state, ModelParams, RegimeReport, Sector, SystemState2x2};
use crate::offdiag::{self, CouplingVector};
use crate::numerics::LogAmplitude;
use crate::output::RunDir;
use crate::registration::{self, MagnetizationTrajectory, RegistrationOptions, RegistrationSummary, Terminal};
use crate::statics;

/// Born weights `(r_uu, r_dd)`.
pub fn born_probabilities(state: &SystemState2x2) -> (f64, f64) {
    (state.r_uu, state.r_dd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub sector: Sector,
    pub weight: f64,
    /// `Pi_i r Pi_i / p_i`.
    pub system_block: SystemState2x2,
    pub pointer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    /// Branches with non-zero weight.
    pub branches: Vec<Branch>,
    /// `log10 |r_ud(t_f)|`; `None` when the block vanished from the start.
    pub offdiag_residual_log10: Option<f64>,
    pub t_f: f64,
}

impl FinalState {
    pub fn weight(&self, sector: Sector) -> f64 {
        self.branches.iter().find(|b| b.sector == sector).map_or(0.0, |b| b.weight)
    }
}

/// `t_f = max(3 tau_reg, time at which both sectors converged)`; without a
/// registration time only the convergence time is used.
pub fn final_time(params: &ModelParams, up: &MagnetizationTrajectory, down: &MagnetizationTrajectory) -> f64 {
    let converged = up.times.last().copied().unwrap_or(0.0).max(down.times.last().copied().unwrap_or(0.0));
    match registration::registration_time_quadrature(params) {
        Ok(tau) => converged.max(3.0 * tau),
        Err(_) => converged,
    }
}

/// Assembles the reduced final state from two registered sectors.
pub fn assemble_from(
    state: &SystemState2x2,
    params: &ModelParams,
    up: &MagnetizationTrajectory,
    down: &MagnetizationTrajectory,
    offdiag_at_tf: LogAmplitude,
) -> Result<FinalState> {
    let state = validate_state(*state)?;
    let mut branches = Vec::new();
    for (sector, traj) in [(Sector::Up, up), (Sector::Down, down)] {
        let Terminal::ConvergedFerro(_) = traj.terminal else {
            return Err(Error::MeasurementFailed { sector: sector.name() });
        };
        let landscape = statics::stationary_magnetizations(sector, params)?;
        let pointer = landscape.ferromagnetic().ok_or(Error::MeasurementFailed { sector: sector.name() })?.m;
        let (p_up, p_down) = born_probabilities(&state);
        let (weight, block) = match sector {
            Sector::Up => (p_up, SystemState2x2::spin_up()),
            Sector::Down => (p_down, SystemState2x2::spin_down()),
        };
        if weight > 0.0 {
            branches.push(Branch { sector, weight, system_block: block, pointer });
        }
    }
    let residual = if offdiag_at_tf.is_zero() { None } else { Some(offdiag_at_tf.log10_abs()) };
    Ok(FinalState { branches, offdiag_residual_log10: residual, t_f: final_time(params, up, down) })
}

/// Runs both registrations and the bath-damped off-diagonal block, then
/// assembles the final state. Dispersion is included when `delta_g > 0`.
pub fn assemble_final_state(state: &SystemState2x2, params: &ModelParams) -> Result<FinalState> {
    let opts = RegistrationOptions::for_params(params);
    let up = registration::integrate_registration(Sector::Up, params, opts)?;
    let down = registration::integrate_registration(Sector::Down, params, opts)?;
    let couplings = if params.delta_g > 0.0 { Some(offdiag::sample_couplings(params, 0)?) } else { None };
    let t_f = final_time(params, &up, &down);
    let residual = offdiag_at(params, couplings.as_ref(), params.gamma > 0.0, state.r_ud, t_f);
    assemble_from(state, params, &up, &down, residual)
}

fn offdiag_at(params: &ModelParams, couplings: Option<&CouplingVector>, bath: bool, r0: Complex64, t: f64) -> LogAmplitude {
    offdiag::collapse_trajectory(params, couplings, bath, r0, &[t]).amplitude[0]
}

/// `p_i (1 - m_i^2) / N` per branch: the spread of the pointer in each branch.
pub fn pointer_correlation(final_state: &FinalState, params: &ModelParams) -> Vec<f64> {
    final_state.branches.iter().map(|b| b.weight * (1.0 - b.pointer * b.pointer) / params.n()).collect()
}

/// Entropy changes in nats. The bath term is the quasi-static estimate
/// `Delta E / T` of the energy the magnet releases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBudget {
    pub s_system_initial: f64,
    pub s_system_final: f64,
    pub s_magnet_initial: f64,
    pub s_magnet_final: f64,
    pub bath_entropy_change: f64,
    pub bath_is_estimate: bool,
    pub delta_total: f64,
}

pub fn entropy_budget(state: &SystemState2x2, params: &ModelParams, final_state: &FinalState) -> Result<EntropyBudget> {
    let n = params.n();
    let s_system_initial = state.entropy();
    let s_system_final = state.dephased().entropy();
    let s_magnet_initial = n * statics::mixing_entropy(0.0)?;
    let mut s_magnet_final = 0.0;
    let mut bath = 0.0;
    for b in &final_state.branches {
        s_magnet_final += b.weight * n * statics::mixing_entropy(b.pointer)?;
        let released = params.coupling_j * n * b.pointer.powi(4) / 4.0 + params.coupling_g * n * b.pointer.abs();
        bath += b.weight * released / params.temperature;
    }
    let delta_total = (s_system_final - s_system_initial) + (s_magnet_final - s_magnet_initial) + bath;
    Ok(EntropyBudget {
        s_system_initial,
        s_system_final,
        s_magnet_initial,
        s_magnet_final,
        bath_entropy_change: bath,
        bath_is_estimate: true,
        delta_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    MeasurementFailed,
    NotAMeasurement,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Completed => 0,
            Outcome::MeasurementFailed => 2,
            Outcome::NotAMeasurement => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub status: String,
    pub detail: Option<String>,
}

impl StageStatus {
    fn new(stage: &str, status: &str, detail: Option<String>) -> Self {
        Self { stage: stage.into(), status: status.into(), detail }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timescales {
    pub tau_red: Option<f64>,
    pub tau_2: Option<f64>,
    pub tau_2_prime: Option<f64>,
    pub recurrence_time: Option<f64>,
    /// `ln` of the bath suppression of the first recurrence.
    pub recurrence_ln_suppression: Option<f64>,
    pub tau_reg: Option<f64>,
    pub tau_reg_asymptotic: Option<f64>,
    /// `tau_red < tau_2 (or tau_2') < tau_reg` where all are defined.
    pub ordered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub outcome: Outcome,
    pub regime: RegimeReport,
    pub born: (f64, f64),
    pub timescales: Timescales,
    pub critical_coupling: Option<f64>,
    pub stages: Vec<StageStatus>,
    pub registration: Vec<RegistrationSummary>,
    pub final_state: Option<FinalState>,
    pub pointer_correlation: Option<Vec<f64>>,
    pub entropy: Option<EntropyBudget>,
}

fn timescales(params: &ModelParams, bath: bool, dispersion: bool) -> Timescales {
    let tau_red = offdiag::reduction_time(params).ok();
    let tau_2 = if bath { offdiag::decay_time_bath(params).ok() } else { None };
    let tau_2_prime = if dispersion { offdiag::dispersion_decay_time(params).ok() } else { None };
    let tau_reg = if bath { registration::registration_time_quadrature(params).ok() } else { None };
    let decay = match (tau_2, tau_2_prime) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let ordered = match (tau_red, decay) {
        (Some(r), Some(d)) => Some(r < d && tau_reg.is_none_or(|g| d < g)),
        _ => None,
    };
    Timescales {
        tau_red,
        tau_2,
        tau_2_prime,
        recurrence_time: offdiag::recurrence_time(params).ok(),
        recurrence_ln_suppression: if bath { offdiag::recurrence_ln_height_bath(params).ok() } else { None },
        tau_reg,
        tau_reg_asymptotic: if bath { registration::registration_time_asymptotic(params).ok() } else { None },
        ordered,
    }
}

/// Executes the whole pipeline and persists it under `out`.
pub fn run_scenario(config: &RunConfig, out: &Path, margin: f64) -> Result<ScenarioReport> {
    config.validate()?;
    let params = config.params;
    let state = config.state;
    let mut run = RunDir::create(out)?;
    run.write_bytes("config.txt", config.to_text().as_bytes())?;

    let regime = validate_regime(&params, margin);
    run.write_json("regime.json", &regime)?;
    let mut stages = vec![StageStatus::new(
        "regime",
        if regime.overall_valid { "ok" } else { "outside-regime" },
        None,
    )];

    let bath = config.bath_active();
    let dispersion = config.dispersion_active();
    let scales = timescales(&params, bath, dispersion);

    // Statics.
    run.write_with("statics_landscape.csv", |w| statics::write_landscape_csv(w, &params, 2001))?;
    for sector in Sector::BOTH {
        let landscape = statics::stationary_magnetizations(sector, &params)?;
        run.write_with(&format!("statics_stationary_{}.csv", sector.name()), |w| statics::write_stationary_csv(w, &landscape))?;
    }
    let g_c = statics::critical_coupling(&params).ok();
    stages.push(StageStatus::new("statics", "ok", None));

    let mut report = ScenarioReport {
        outcome: Outcome::Completed,
        regime,
        born: born_probabilities(&state),
        timescales: scales,
        critical_coupling: g_c,
        stages,
        registration: Vec::new(),
        final_state: None,
        pointer_correlation: None,
        entropy: None,
    };

    if params.coupling_g == 0.0 {
        report.outcome = Outcome::NotAMeasurement;
        report.stages.push(StageStatus::new("collapse", "unavailable", Some("g = 0: no system-apparatus coupling".into())));
        report.stages.push(StageStatus::new("registration", "unavailable", Some("g = 0".into())));
        return finish(run, config, report);
    }

    // Off-diagonal block.
    let couplings = if dispersion { Some(offdiag::sample_couplings(&params, config.seed)?) } else { None };
    let t1 = report.timescales.recurrence_time.unwrap_or(1.0);
    let t_max = config.t_max.unwrap_or(2.0 * t1);
    let times = config.time_grid(t_max);
    let collapse = offdiag::collapse_trajectory(&params, couplings.as_ref(), bath, state.r_ud, &times);
    run.write_with("offdiag.csv", |w| collapse.write_csv(w))?;
    report.stages.push(StageStatus::new("collapse", "ok", None));

    // Registration needs the bath.
    if !bath {
        report.stages.push(StageStatus::new(
            "registration",
            "unavailable",
            Some("registration requires the bath (gamma > 0 and bath on)".into()),
        ));
        return finish(run, config, report);
    }
    let opts = RegistrationOptions::for_params(&params);
    let (up, down) = rayon::join(
        || registration::integrate_registration(Sector::Up, &params, opts),
        || registration::integrate_registration(Sector::Down, &params, opts),
    );
    let (up, down) = (up?, down?);
    for traj in [&up, &down] {
        run.write_with(&format!("registration_{}.csv", traj.sector.name()), |w| traj.write_csv(w))?;
    }
    report.registration = vec![registration::summarize(&up, &params), registration::summarize(&down, &params)];
    run.write_json("registration_summary.json", &report.registration)?;

    let t_f = final_time(&params, &up, &down);
    let residual = offdiag_at(&params, couplings.as_ref(), bath, state.r_ud, t_f);
    match assemble_from(&state, &params, &up, &down, residual) {
        Ok(fs) => {
            report.stages.push(StageStatus::new("registration", "ok", None));
            report.pointer_correlation = Some(pointer_correlation(&fs, &params));
            report.entropy = Some(entropy_budget(&state, &params, &fs)?);
            report.final_state = Some(fs);
        }
        Err(Error::MeasurementFailed { sector }) => {
            let terminal = if sector == "up" { up.terminal } else { down.terminal };
            report.outcome = Outcome::MeasurementFailed;
            report.stages.push(StageStatus::new(
                "registration",
                "failed",
                Some(format!("sector {sector} ended {}", terminal.name())),
            ));
        }
        Err(e) => return Err(e),
    }
    finish(run, config, report)
}

fn finish(mut run: RunDir, config: &RunConfig, report: ScenarioReport) -> Result<ScenarioReport> {
    run.write_json("report.json", &report)?;
    #[derive(Serialize)]
    struct Body<'a> {
        command: &'static str,
        config: &'a RunConfig,
        outcome: Outcome,
        stages: &'a [StageStatus],
        timescales: &'a Timescales,
        final_state: &'a Option<FinalState>,
        entropy: &'a Option<EntropyBudget>,
    }
    run.finish(&Body {
        command: "scenario",
        config,
        outcome: report.outcome,
        stages: &report.stages,
        timescales: &report.timescales,
        final_state: &report.final_state,
        entropy: &report.entropy,
    })?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn born_rule() {
        assert_eq!(born_probabilities(&SystemState2x2::spin_up()), (1.0, 0.0));
        assert_eq!(born_probabilities(&SystemState2x2::equal_superposition()), (0.5, 0.5));
        let s = SystemState2x2::new(0.3, Complex64::new(0.0, 0.0));
        let (a, b) = born_probabilities(&s);
        assert_eq!(a, 0.3);
        assert!((b - 0.7).abs() < 1e-15);
    }

    #[test]
    fn final_state_at_the_reference_point() {
        let p = ModelParams::reference();
        let fs = assemble_final_state(&SystemState2x2::equal_superposition(), &p).unwrap();
        assert_eq!(fs.branches.len(), 2);
        assert_eq!(fs.weight(Sector::Up) + fs.weight(Sector::Down), 1.0);
        assert_eq!(fs.branches[0].pointer, -fs.branches[1].pointer);
        assert!((fs.branches[0].pointer - 0.996).abs() < 1e-3);
        assert!(fs.offdiag_residual_log10.unwrap() < -30.0);

        let up = assemble_final_state(&SystemState2x2::spin_up(), &p).unwrap();
        assert_eq!(up.branches.len(), 1);
        assert_eq!(up.branches[0].weight, 1.0);
        assert!(up.offdiag_residual_log10.is_none());

        let mixed = SystemState2x2::new(0.3, Complex64::new(0.2, 0.1));
        let a = assemble_final_state(&mixed, &p).unwrap();
        let b = assemble_final_state(&mixed.dephased(), &p).unwrap();
        assert_eq!(a.branches, b.branches);
    }

    #[test]
    fn weak_coupling_fails() {
        let p = ModelParams { coupling_g: 0.05, ..ModelParams::reference() };
        let r = assemble_final_state(&SystemState2x2::equal_superposition(), &p);
        assert!(matches!(r, Err(Error::MeasurementFailed { .. })));
    }

    #[test]
    fn pointer_spread() {
        let p = ModelParams::reference();
        let fs = FinalState {
            branches: vec![Branch { sector: Sector::Up, weight: 0.5, system_block: SystemState2x2::spin_up(), pointer: 0.996 }],
            offdiag_residual_log10: None,
            t_f: 0.0,
        };
        let c = pointer_correlation(&fs, &p);
        assert!((c[0] - 3.992e-8).abs() < 1e-11, "{c:?}");
        let sat = FinalState { branches: vec![Branch { pointer: 1.0, ..fs.branches[0].clone() }], ..fs };
        assert_eq!(pointer_correlation(&sat, &p), vec![0.0]);
    }

    #[test]
    fn entropy_balance() {
        let p = ModelParams::reference();
        let pure = SystemState2x2::equal_superposition();
        let fs = assemble_final_state(&pure, &p).unwrap();
        let e = entropy_budget(&pure, &p, &fs).unwrap();
        assert!(e.s_system_initial.abs() < 1e-12);
        assert!((e.s_system_final - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(e.s_magnet_final < e.s_magnet_initial);
        assert!(e.bath_entropy_change > e.s_magnet_initial - e.s_magnet_final);
        assert!(e.delta_total > 0.0);

        let diag = SystemState2x2::new(0.3, Complex64::new(0.0, 0.0));
        let e = entropy_budget(&diag, &p, &fs).unwrap();
        assert_eq!(e.s_system_final, e.s_system_initial);
    }

    #[test]
    fn idempotent_measurement() {
        let p = ModelParams::reference();
        let fs = assemble_final_state(&SystemState2x2::new(0.7, Complex64::new(0.1, 0.0)), &p).unwrap();
        for b in &fs.branches {
            let again = assemble_final_state(&b.system_block, &p).unwrap();
            assert_eq!(again.branches.len(), 1);
            assert_eq!(again.branches[0].sector, b.sector);
            assert_eq!(again.branches[0].weight, 1.0);
        }
    }

    #[test]
    fn reference_timescales_are_ordered() {
        let t = timescales(&ModelParams::reference(), true, false);
        assert_eq!(t.ordered, Some(true));
        assert!(t.tau_red.unwrap() < t.tau_2.unwrap());
    }
}
