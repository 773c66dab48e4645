//! Acceptance criteria. Runs as a plain binary so every line is printed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qmeasure::config::RunConfig;
use qmeasure::model::{ModelParams, Sector, SystemState2x2, DEFAULT_MARGIN};
use qmeasure::numerics::logdomain::{cos_power, LogAmplitude};
use qmeasure::numerics::ode::OdeOptions;
use qmeasure::offdiag::{self, CouplingVector};
use qmeasure::oracles;
use qmeasure::registration::{self, RegistrationOptions, Terminal};
use qmeasure::scenario;
use qmeasure::statics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn at(g: f64, t: f64) -> ModelParams {
    ModelParams { coupling_g: g, temperature: t, ..ModelParams::reference() }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn critical_coupling() -> Verdict {
    let (g_c, dt) = timed(|| statics::critical_coupling(&at(0.0, 0.34)));
    match g_c {
        Ok(g) => verdict((g - 0.08).abs() <= 0.005 && dt < Duration::from_secs(1), format!("g_c = {g:.6} in {dt:.2?}")),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn pointer_value() -> Verdict {
    let (l, dt) = timed(|| statics::stationary_magnetizations(Sector::Up, &at(0.09, 0.34)));
    match l.map(|l| l.ferromagnetic().map(|s| s.m)) {
        Ok(Some(m)) => verdict((m - 0.996).abs() <= 0.001 && dt < Duration::from_secs(1), format!("m_f = {m:.6} in {dt:.2?}")),
        other => verdict(false, format!("{other:?}")),
    }
}

fn curie_temperature() -> Verdict {
    let (tc, dt) = timed(|| statics::curie_temperature(&at(0.0, 0.34)));
    verdict((tc - 0.36).abs() <= 0.01 && dt < Duration::from_secs(1), format!("T_c = {tc:.6} in {dt:.2?}"))
}

fn low_temperature_asymptote() -> Verdict {
    let mut worst = 0.0f64;
    for k in 1..=10 {
        let t = 0.005 * k as f64;
        let Ok(g) = statics::critical_coupling(&at(0.0, t)) else {
            return verdict(false, format!("no g_c at T = {t}"));
        };
        worst = worst.max((g * g / (4.0 * t.powi(3) / 27.0) - 1.0).abs());
    }
    verdict(worst <= 0.02, format!("worst relative deviation {worst:.4} for T in [0.005, 0.05]"))
}

fn collapse_envelope() -> Verdict {
    let p = ModelParams { n_spins: 10_000, ..ModelParams::reference() };
    let tau = offdiag::reduction_time(&p).unwrap();
    let v = cos_power(2.0 * p.coupling_g * tau, p.n_spins).abs();
    let rel = v / (-1f64).exp() - 1.0;
    verdict(rel.abs() <= 0.01, format!("|cos^N| at tau_red = {v:.6}, relative deviation {rel:.2e}"))
}

fn recurrences() -> Verdict {
    let r0 = Complex64::new(0.3, 0.2);
    let mut worst = 0.0f64;
    for n in [1000, 1001, 100_000] {
        let p = ModelParams { n_spins: n, gamma: 0.0, delta_g: 0.0, ..ModelParams::reference() };
        let t1 = offdiag::recurrence_time(&p).unwrap();
        let tr = offdiag::collapse_trajectory(&p, None, false, r0, &[t1]);
        worst = worst.max((tr.amplitude[0].abs() - r0.norm()).abs());
    }
    let exact = worst <= 1e-12;
    let p = ModelParams { n_spins: 1000, gamma: 0.0, delta_g: 0.05 * 0.09, ..ModelParams::reference() };
    let c = offdiag::sample_couplings(&p, RunConfig::reference().seed).unwrap();
    let t1 = offdiag::recurrence_time(&p).unwrap();
    let peak = offdiag::envelope_dispersed(t1, &c, Complex64::new(1.0, 0.0));
    let predicted = -p.n() * PI * PI * (p.delta_g / p.coupling_g).powi(2) / 2.0;
    let ratio = (peak.ln_abs - predicted).exp();
    verdict(
        exact && (ratio - 1.0).abs() <= 0.10,
        format!("uniform peak error {worst:.1e}; dispersed peak / prediction = {ratio:.4}"),
    )
}

fn spin_echo() -> Verdict {
    let r0 = Complex64::new(0.4, -0.2);
    let mut worst = 0.0f64;
    for (seed, theta) in [(0u64, 5.0), (1, 25.0), (2, 80.0)] {
        let p = ModelParams { delta_g: 0.0045, ..ModelParams::reference() };
        let c = offdiag::sample_couplings(&p, seed).unwrap();
        let tr = offdiag::spin_echo(theta, &c, r0, &[2.0 * theta]).unwrap();
        worst = worst.max((tr.amplitude[0].to_complex() - r0).norm());
    }
    verdict(worst <= 1e-12, format!("max |r(2 theta) - r(0)| = {worst:.2e}"))
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let r0 = Complex64::new(0.3, -0.4);
    let mut worst = 0.0f64;
    for n in 1..=12u64 {
        let p = ModelParams { n_spins: n, delta_g: 0.0, ..ModelParams::reference() };
        let pd = ModelParams { delta_g: 0.01, ..p };
        let dispersed = if n > 1 { offdiag::sample_couplings(&pd, n).unwrap() } else { CouplingVector::from_values(vec![0.097]) };
        let uniform = CouplingVector::uniform(p.coupling_g, n as usize);
        let horizon = 2.0 * offdiag::recurrence_time(&p).unwrap();
        for k in 0..50 {
            let t = horizon * k as f64 / 49.0;
            let closed = offdiag::envelope_uniform(t, &p, r0).to_complex();
            worst = worst.max((oracles::offdiag_sector_sum(t, &p, r0) - closed).norm());
            worst = worst.max((oracles::full_hilbert_offdiag(t, &uniform, r0).unwrap() - closed).norm());
            let closed_d = offdiag::envelope_dispersed(t, &dispersed, r0).to_complex();
            worst = worst.max((oracles::full_hilbert_offdiag(t, &dispersed, r0).unwrap() - closed_d).norm());
        }
    }
    let dt = start.elapsed();
    verdict(worst <= 1e-12 && dt < Duration::from_secs(60), format!("max deviation {worst:.2e}, suite {dt:.2?}"))
}

fn short_time_equations() -> Verdict {
    let p = ModelParams { gamma: 0.0, ..ModelParams::reference() };
    let tr = offdiag::integrate_zeta_short_time(&p, 5.0, 0.05).unwrap();
    let mut rot = 0.0f64;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let x = 2.0 * p.coupling_g * t;
        rot = rot.max((s.zeta0 - Complex64::new(x.cos(), 0.0)).norm());
        rot = rot.max((s.zetaz - Complex64::new(0.0, x.sin())).norm());
    }
    let p = ModelParams::reference();
    let tau2 = offdiag::decay_time_bath(&p).unwrap();
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
    let tr = offdiag::integrate_zeta_with(&p, tau2, tau2 / 20.0, opts).unwrap();
    let amp = tr.amplitude(p.n_spins, Complex64::new(1.0, 0.0));
    let mut damp = 0.0f64;
    let mut at_tau2 = 0.0;
    for (t, a) in tr.times.iter().zip(&amp).skip(1) {
        let factor = (a.ln_abs - cos_power(2.0 * p.coupling_g * t, p.n_spins).ln_abs).exp();
        let expected = (-(t / tau2).powi(4)).exp();
        damp = damp.max((factor / expected - 1.0).abs());
        at_tau2 = factor;
    }
    verdict(
        rot <= 1e-10 && damp <= 0.02,
        format!(
            "rotation error {rot:.1e}; damping factor at tau_2 = {at_tau2:.4} vs {:.4}, worst relative {damp:.3}",
            (-1f64).exp()
        ),
    )
}

fn registration_convergence() -> Verdict {
    let p = at(0.09, 0.34);
    let opts = RegistrationOptions::for_params(&p);
    let mut ok = true;
    let mut notes = Vec::new();
    for (sector, target) in [(Sector::Up, 0.996), (Sector::Down, -0.996)] {
        let tr = registration::integrate_registration(sector, &p, opts).unwrap();
        let m = match tr.terminal {
            Terminal::ConvergedFerro(m) => m,
            other => {
                ok = false;
                notes.push(format!("{} {other:?}", sector.name()));
                continue;
            }
        };
        let trace = tr.zeta0.iter().map(|z| (z - 1.0).abs()).fold(0.0, f64::max);
        let monotone = tr.free_energy.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        ok &= (m - target).abs() <= 0.001 && trace <= 1e-10 && monotone;
        notes.push(format!("{} m = {m:.6}, trace drift {trace:.1e}, F monotone {monotone}", sector.name()));
    }
    verdict(ok, notes.join("; "))
}

fn registration_time() -> Verdict {
    let t = 0.2;
    let gc = statics::critical_coupling_low_t(&at(0.0, t));
    let near = at(1.02 * gc, t);
    let q = registration::registration_time_quadrature(&near).unwrap();
    let a = registration::registration_time_asymptotic(&near).unwrap();
    let closed = (q / a - 1.0).abs();

    let p = at(1.5 * gc, t);
    let tau = registration::registration_time_quadrature(&p).unwrap();
    let tr = registration::integrate_registration(Sector::Up, &p, RegistrationOptions::for_params(&p)).unwrap();
    let threshold = registration::registration_threshold(&p);
    let crossing = registration::crossing_time(&tr, threshold);
    let ode_ok = matches!(crossing, Ok(tc) if (tc / tau - 1.0).abs() <= 0.15);
    let mut sensitivity = Vec::new();
    for c in [1.0, 2.0, 3.0] {
        let m = c * (t / (3.0 * p.coupling_j)).sqrt();
        if let Ok(tc) = registration::crossing_time(&tr, m) {
            sensitivity.push(format!("c={c}: {:.3}", tc / tau));
        }
    }
    verdict(
        closed <= 0.05 && ode_ok,
        format!(
            "quadrature/asymptotic - 1 = {closed:.4}; threshold {threshold:.4}, crossing {:?}, tau_reg {tau:.4e}; crossing/tau_reg at c sqrt(T/3J) [{}]",
            crossing.map(|x| format!("{x:.4e}")).map_err(|e| e.to_string()),
            sensitivity.join(", ")
        ),
    )
}

fn tail_rate() -> Verdict {
    let p = at(0.09, 0.34);
    let tr = registration::integrate_registration(Sector::Up, &p, RegistrationOptions::for_params(&p)).unwrap();
    match registration::asymptotic_rate(&tr, &p) {
        Ok(fit) => {
            let target = p.gamma * p.coupling_j;
            let rel = fit.rate / target - 1.0;
            verdict(rel.abs() <= 0.25, format!("rate {:.4e} vs gamma J = {target:.1e} ({rel:+.3})", fit.rate))
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn random_state(rng: &mut ChaCha8Rng, coherent: bool) -> SystemState2x2 {
    let r_uu: f64 = rng.random();
    let radius = if coherent { (r_uu * (1.0 - r_uu)).sqrt() * rng.random::<f64>() } else { 0.0 };
    let phase = 2.0 * PI * rng.random::<f64>();
    SystemState2x2::new(r_uu, Complex64::from_polar(radius, phase))
}

fn registered_pair() -> (ModelParams, registration::MagnetizationTrajectory, registration::MagnetizationTrajectory) {
    let p = ModelParams::reference();
    let opts = RegistrationOptions::for_params(&p);
    let up = registration::integrate_registration(Sector::Up, &p, opts).unwrap();
    let down = registration::integrate_registration(Sector::Down, &p, opts).unwrap();
    (p, up, down)
}

fn entropy() -> Verdict {
    let (p, up, down) = registered_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut bad = 0;
    for k in 0..1000 {
        let s = random_state(&mut rng, k % 10 != 0);
        let fs = scenario::assemble_from(&s, &p, &up, &down, LogAmplitude::zero()).unwrap();
        let b = scenario::entropy_budget(&s, &p, &fs).unwrap();
        let ok = if s.r_ud == Complex64::new(0.0, 0.0) {
            (b.s_system_final - b.s_system_initial).abs() <= 1e-12
        } else {
            b.s_system_final > b.s_system_initial
        };
        bad += usize::from(!ok);
    }
    let r = SystemState2x2::equal_superposition();
    let fs = scenario::assemble_final_state(&r, &p).unwrap();
    let total = scenario::entropy_budget(&r, &p, &fs).unwrap().delta_total;
    verdict(bad == 0 && total > 0.0, format!("{bad} violations in 1000 states; delta_total = {total:.4e}"))
}

fn born_preservation() -> Verdict {
    let (p, up, down) = registered_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(&mut rng, true);
        let fs = scenario::assemble_from(&s, &p, &up, &down, LogAmplitude::zero()).unwrap();
        worst = worst.max((fs.weight(Sector::Up) - s.r_uu).abs());
        worst = worst.max((fs.weight(Sector::Down) - s.r_dd).abs());
    }
    verdict(worst <= 1e-12, format!("max weight deviation {worst:.1e}"))
}

fn read_tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let config = RunConfig::reference();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    scenario::run_scenario(&config, a.path(), DEFAULT_MARGIN).unwrap();
    scenario::run_scenario(&config, b.path(), DEFAULT_MARGIN).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    verdict(!ta.is_empty() && ta == tb, format!("{} files compared", ta.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 15] = [
        ("critical coupling", critical_coupling),
        ("ferromagnetic pointer value", pointer_value),
        ("Curie temperature", curie_temperature),
        ("low-temperature asymptote", low_temperature_asymptote),
        ("collapse envelope", collapse_envelope),
        ("recurrences", recurrences),
        ("spin echo", spin_echo),
        ("oracle equivalence", oracle_equivalence),
        ("short-time equations", short_time_equations),
        ("registration", registration_convergence),
        ("registration time", registration_time),
        ("tail rate", tail_rate),
        ("entropy", entropy),
        ("Born preservation", born_preservation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("{:>2}. {:<4} {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
