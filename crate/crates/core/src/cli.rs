//! `qmeasure` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::model::{validate_regime, RegimeReport, Sector, DEFAULT_MARGIN};
use crate::offdiag;
use crate::output::{fmt_f64, RunDir};
use crate::registration::{self, RegistrationOptions, Terminal};
use crate::scenario::{self, Outcome};
use crate::statics;

#[derive(Debug, Parser)]
#[command(name = "qmeasure", version, about = "Curie-Weiss model of a quantum measurement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key = value configuration file; the reference point when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for the coupling draw; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sweep axis KEY=START:STOP:STEPS (at most two).
    #[arg(long, global = true, value_name = "AXIS")]
    pub sweep: Vec<String>,
    /// Add a spin-echo run with the pulse at this time.
    #[arg(long = "echo-at", global = true, value_name = "THETA")]
    pub echo_at: Option<f64>,
    /// Factor that operationalizes ">>" in the regime checks.
    #[arg(long, global = true, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Free-energy landscape, stationary points, g_c and T_c.
    Statics,
    /// Off-diagonal collapse, recurrences and optional echo.
    Collapse,
    /// Registration of the pointer in both sectors.
    Register,
    /// Full measurement scenario.
    Scenario,
    /// Grid of scenario outcomes over one or two parameters.
    Sweep,
    /// Regime report only.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Statics => "statics",
            Command::Collapse => "collapse",
            Command::Register => "register",
            Command::Scenario => "scenario",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
        }
    }
}

/// Entry point; returns the process exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::reference(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if !(cli.common.margin > 0.0) {
        return Err(Error::Config("--margin must be positive".into()));
    }
    if cli.command.name() != "sweep" && !cli.common.sweep.is_empty() {
        return Err(Error::Config("--sweep is only valid with the sweep command".into()));
    }
    let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("qmeasure-out").join(cli.command.name()));
    match cli.command {
        Command::Statics => cmd_statics(&config, &out),
        Command::Collapse => cmd_collapse(&config, &out, cli.common.echo_at),
        Command::Register => cmd_register(&config, &out),
        Command::Scenario => cmd_scenario(&config, &out, cli.common.margin),
        Command::Sweep => {
            let axes = cli.common.sweep.iter().map(|s| SweepAxis::parse(s)).collect::<Result<Vec<_>>>()?;
            cmd_sweep(&config, &axes, &out, cli.common.margin)
        }
        Command::Validate => cmd_validate(&config, &out, cli.common.margin),
    }
}

#[derive(Serialize)]
struct Body<'a, T: Serialize> {
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    extra: T,
}

fn open_run(config: &RunConfig, out: &Path) -> Result<RunDir> {
    let mut run = RunDir::create(out)?;
    run.write_bytes("config.txt", config.to_text().as_bytes())?;
    Ok(run)
}

#[derive(Debug, Serialize)]
struct SectorStatics {
    sector: Sector,
    minima: usize,
    global_minimum: f64,
    ferromagnetic: Option<f64>,
    paramagnetic: Option<f64>,
}

pub fn cmd_statics(config: &RunConfig, out: &Path) -> Result<i32> {
    let p = &config.params;
    let mut run = open_run(config, out)?;
    run.write_with("landscape.csv", |w| statics::write_landscape_csv(w, p, 2001))?;
    let mut sectors = Vec::new();
    for sector in Sector::BOTH {
        let l = statics::stationary_magnetizations(sector, p)?;
        run.write_with(&format!("stationary_{}.csv", sector.name()), |w| statics::write_stationary_csv(w, &l))?;
        sectors.push(SectorStatics {
            sector,
            minima: l.minima().count(),
            global_minimum: l.global().m,
            ferromagnetic: l.ferromagnetic().map(|s| s.m),
            paramagnetic: l.paramagnetic().map(|s| s.m),
        });
    }
    let g_c = statics::critical_coupling(p);
    let gap = statics::ferromagnetic_gap(p);
    let summary = serde_json::json!({
        "critical_coupling": g_c.as_ref().ok(),
        "critical_coupling_error": g_c.as_ref().err().map(|e| e.to_string()),
        "critical_coupling_low_t": statics::critical_coupling_low_t(p),
        "curie_temperature": statics::curie_temperature(p),
        "ferromagnetic_gap": gap.as_ref().ok(),
        "ferromagnetic_gap_error": gap.as_ref().err().map(|e| e.to_string()),
        "sectors": sectors,
    });
    run.write_json("summary.json", &summary)?;
    println!("g_c = {}", g_c.as_ref().map_or_else(|e| e.to_string(), |g| format!("{g:.6}")));
    for s in &sectors {
        println!(
            "sector {}: {} minima, m_f = {}",
            s.sector.name(),
            s.minima,
            s.ferromagnetic.map_or("none".to_string(), |m| format!("{m:.6}"))
        );
    }
    run.finish(&Body { command: "statics", config, extra: serde_json::json!({}) })?;
    Ok(0)
}

pub fn cmd_collapse(config: &RunConfig, out: &Path, echo_at: Option<f64>) -> Result<i32> {
    let p = &config.params;
    let mut run = open_run(config, out)?;
    let bath = config.bath_active();
    let couplings = if config.dispersion_active() { Some(offdiag::sample_couplings(p, config.seed)?) } else { None };
    let t1 = offdiag::recurrence_time(p).ok();
    let t_max = config.t_max.unwrap_or(2.0 * t1.unwrap_or(1.0));
    let times = config.time_grid(t_max);
    let traj = offdiag::collapse_trajectory(p, couplings.as_ref(), bath, config.state.r_ud, &times);
    run.write_with("offdiag.csv", |w| traj.write_csv(w))?;

    let first_peak = t1.map(|t| {
        offdiag::collapse_trajectory(p, couplings.as_ref(), bath, Complex64::new(1.0, 0.0), &[t]).amplitude[0].ln_abs
    });
    let dispersion_prediction = if p.coupling_g > 0.0 {
        Some(-p.n() * std::f64::consts::PI.powi(2) * (p.delta_g / p.coupling_g).powi(2) / 2.0)
    } else {
        None
    };
    let timescales = serde_json::json!({
        "tau_red": offdiag::reduction_time(p).ok(),
        "tau_2": offdiag::decay_time_bath(p).ok(),
        "tau_2_prime": offdiag::dispersion_decay_time(p).ok(),
        "recurrence_time": t1,
        "recurrence_ln_height_bath": offdiag::recurrence_ln_height_bath(p).ok(),
        "recurrence_ln_height_dispersion": dispersion_prediction,
        "first_peak_ln_abs": first_peak,
        "bath": bath,
        "dispersion": couplings.is_some(),
    });
    run.write_json("timescales.json", &timescales)?;

    let mut pulse_time = None;
    if let Some(theta) = echo_at {
        let c = match &couplings {
            Some(c) => c.clone(),
            None => offdiag::CouplingVector::uniform(p.coupling_g, usize::try_from(p.n_spins).unwrap_or(usize::MAX).min(offdiag::MAX_SAMPLED_SPINS as usize)),
        };
        let mut echo_times = config.time_grid((4.0 * theta).max(t_max));
        echo_times.push(2.0 * theta);
        echo_times.sort_by(f64::total_cmp);
        echo_times.dedup();
        let echo = offdiag::spin_echo(theta, &c, config.state.r_ud, &echo_times)?;
        run.write_with("echo.csv", |w| echo.write_csv(w))?;
        pulse_time = Some(theta);
    }
    println!("tau_red = {}", timescales["tau_red"]);
    println!("first recurrence ln|r|/|r0| = {}", timescales["first_peak_ln_abs"]);
    run.finish(&Body { command: "collapse", config, extra: serde_json::json!({ "pulse_time": pulse_time, "echo_bath_included": false }) })?;
    Ok(0)
}

pub fn cmd_register(config: &RunConfig, out: &Path) -> Result<i32> {
    let p = &config.params;
    if p.gamma == 0.0 {
        return Err(Error::ZeroBathCoupling);
    }
    let mut run = open_run(config, out)?;
    let mut opts = RegistrationOptions::for_params(p);
    if let Some(t) = config.t_max {
        opts.t_max = t;
    }
    let (up, down) = rayon::join(
        || registration::integrate_registration(Sector::Up, p, opts),
        || registration::integrate_registration(Sector::Down, p, opts),
    );
    let (up, down) = (up?, down?);
    let mut summaries = Vec::new();
    for traj in [&up, &down] {
        run.write_with(&format!("registration_{}.csv", traj.sector.name()), |w| traj.write_csv(w))?;
        let s = registration::summarize(traj, p);
        println!(
            "sector {}: {} m_final = {}",
            traj.sector.name(),
            s.terminal,
            s.m_final.map_or("-".into(), |m| format!("{m:.6}"))
        );
        summaries.push(s);
    }
    run.write_json("summary.json", &summaries)?;
    let failed = [&up, &down].iter().any(|t| !matches!(t.terminal, Terminal::ConvergedFerro(_)));
    let outcome = if failed { Outcome::MeasurementFailed } else { Outcome::Completed };
    run.finish(&Body { command: "register", config, extra: serde_json::json!({ "outcome": outcome }) })?;
    Ok(outcome.exit_code())
}

pub fn cmd_scenario(config: &RunConfig, out: &Path, margin: f64) -> Result<i32> {
    let report = scenario::run_scenario(config, out, margin)?;
    println!("outcome: {:?}", report.outcome);
    for s in &report.stages {
        println!("  {:<13} {}{}", s.stage, s.status, s.detail.as_ref().map_or(String::new(), |d| format!(" ({d})")));
    }
    if let Some(e) = &report.entropy {
        println!("entropy change: {:.6e} nats", e.delta_total);
    }
    Ok(report.outcome.exit_code())
}

#[derive(Debug, Clone, Serialize)]
struct SweepPoint {
    index: usize,
    values: Vec<f64>,
    outcome: String,
    registration: String,
    regime_valid: bool,
    critical_coupling: Option<f64>,
    tau_reg: Option<f64>,
    m_final: Option<f64>,
    ferro_minima: usize,
    m_ferro: Option<f64>,
}

fn sweep_point(base: &RunConfig, axes: &[SweepAxis], values: &[f64], index: usize, margin: f64) -> SweepPoint {
    let mut point = SweepPoint {
        index,
        values: values.to_vec(),
        outcome: "invalid-config".into(),
        registration: "unavailable".into(),
        regime_valid: false,
        critical_coupling: None,
        tau_reg: None,
        m_final: None,
        ferro_minima: 0,
        m_ferro: None,
    };
    let mut cfg = base.clone();
    for (axis, v) in axes.iter().zip(values) {
        if cfg.set(&axis.key, &format!("{v:?}")).is_err() {
            return point;
        }
    }
    if cfg.validate().is_err() {
        return point;
    }
    let p = cfg.params;
    let regime: RegimeReport = validate_regime(&p, margin);
    point.regime_valid = regime.overall_valid;
    point.critical_coupling = statics::critical_coupling(&p).ok();
    point.tau_reg = registration::registration_time_quadrature(&p).ok();
    if let Ok(l) = statics::stationary_magnetizations(Sector::Up, &p) {
        let ferro: Vec<_> = l.minima().filter(|s| s.label != statics::PhaseLabel::Paramagnetic).collect();
        point.ferro_minima = ferro.len();
        point.m_ferro = l.ferromagnetic().map(|s| s.m);
    }
    point.registration = if p.gamma == 0.0 {
        "unavailable".into()
    } else {
        let mut opts = RegistrationOptions::for_params(&p);
        if let Some(t) = cfg.t_max {
            opts.t_max = t;
        }
        match registration::integrate_registration(Sector::Up, &p, opts) {
            Ok(tr) => {
                point.m_final = tr.terminal.m_final();
                match tr.terminal {
                    Terminal::ConvergedFerro(_) => "registered".into(),
                    _ => "failed".into(),
                }
            }
            Err(_) => "error".into(),
        }
    };
    point.outcome = if !point.regime_valid { "invalid-regime".into() } else { point.registration.clone() };
    point
}

pub fn cmd_sweep(config: &RunConfig, axes: &[SweepAxis], out: &Path, margin: f64) -> Result<i32> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config("sweep needs one or two --sweep axes".into()));
    }
    if axes.len() == 2 && axes[0].key == axes[1].key {
        return Err(Error::Config("sweep axes must differ".into()));
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        grid = grid.into_iter().flat_map(|prefix| axis.values().into_iter().map(move |v| [prefix.clone(), vec![v]].concat())).collect();
    }
    let mut run = open_run(config, out)?;
    let points: Vec<Result<SweepPoint>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, values)| {
            let point = sweep_point(config, axes, values, i, margin);
            let dir = out.join(format!("point_{i:04}"));
            std::fs::create_dir_all(&dir)?;
            let text = serde_json::to_string_pretty(&point)? + "\n";
            std::fs::write(dir.join("point.json"), text)?;
            Ok(point)
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    for p in &points {
        run.adopt(&format!("point_{:04}/point.json", p.index))?;
    }
    run.write_with("sweep.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header: Vec<String> = vec!["index".into()];
        header.extend(axes.iter().map(|a| a.key.clone()));
        header.extend(
            ["outcome", "registration", "regime_valid", "g_c", "tau_reg", "m_final", "ferro_minima", "m_ferro"].map(String::from),
        );
        w.write_record(&header)?;
        let opt = |x: Option<f64>| x.map_or(String::new(), fmt_f64);
        for p in &points {
            let mut row = vec![p.index.to_string()];
            row.extend(p.values.iter().map(|v| fmt_f64(*v)));
            row.extend([
                p.outcome.clone(),
                p.registration.clone(),
                p.regime_valid.to_string(),
                opt(p.critical_coupling),
                opt(p.tau_reg),
                opt(p.m_final),
                p.ferro_minima.to_string(),
                opt(p.m_ferro),
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let registered = points.iter().filter(|p| p.outcome == "registered").count();
    println!("{} points, {} registered", points.len(), registered);
    run.finish(&Body { command: "sweep", config, extra: serde_json::json!({ "axes": axes, "points": points.len() }) })?;
    Ok(0)
}

pub fn cmd_validate(config: &RunConfig, out: &Path, margin: f64) -> Result<i32> {
    let report = validate_regime(&config.params, margin);
    let mut run = open_run(config, out)?;
    run.write_json("regime.json", &report)?;
    for c in &report.checks {
        println!(
            "{:<42} {:>12.4e} vs {:>12.4e}  {}{}",
            c.name,
            c.lhs,
            c.rhs,
            if c.pass { "pass" } else { "FAIL" },
            if c.required { "" } else { " (reported only)" }
        );
    }
    println!("overall: {}", if report.overall_valid { "valid" } else { "outside the regime" });
    run.finish(&Body { command: "validate", config, extra: serde_json::json!({ "overall_valid": report.overall_valid }) })?;
    Ok(0)
}
