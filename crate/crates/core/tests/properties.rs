use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use qmeasure::model::{ModelParams, Sector, SystemState2x2};
use qmeasure::numerics::logdomain::{cos_power, LogAmplitude};
use qmeasure::offdiag;
use qmeasure::oracles;
use qmeasure::registration::{self, MagnetizationTrajectory, RegistrationOptions};
use qmeasure::scenario;
use qmeasure::statics;

fn params(g: f64, t: f64) -> ModelParams {
    ModelParams { coupling_g: g, temperature: t, ..ModelParams::reference() }
}

fn state() -> impl Strategy<Value = SystemState2x2> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r_uu, s, phase)| {
        let radius = (r_uu * (1.0 - r_uu)).sqrt() * s;
        SystemState2x2::new(r_uu, Complex64::from_polar(radius, phase))
    })
}

fn registered() -> &'static (ModelParams, MagnetizationTrajectory, MagnetizationTrajectory) {
    static PAIR: OnceLock<(ModelParams, MagnetizationTrajectory, MagnetizationTrajectory)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let p = ModelParams::reference();
        let opts = RegistrationOptions::for_params(&p);
        let up = registration::integrate_registration(Sector::Up, &p, opts).unwrap();
        let down = registration::integrate_registration(Sector::Down, &p, opts).unwrap();
        (p, up, down)
    })
}

proptest! {
    #[test]
    fn free_energy_is_symmetric_under_sector_exchange(m in -0.999..0.999f64, g in 0.0..0.5f64, t in 0.05..1.0f64) {
        let p = params(g, t);
        let up = statics::free_energy(m, Sector::Up, &p).unwrap();
        let down = statics::free_energy(-m, Sector::Down, &p).unwrap();
        prop_assert!((up - down).abs() <= 1e-14 * (1.0 + up.abs()));
    }

    #[test]
    fn stationary_points_solve_the_fixed_point(g in 0.0..0.3f64, t in 0.1..0.6f64) {
        let p = params(g, t);
        let l = statics::stationary_magnetizations(Sector::Up, &p).unwrap();
        for s in &l.points {
            prop_assert!(statics::fixed_point_residual(s.m, Sector::Up, &p).abs() < 1e-10, "{s:?}");
        }
        prop_assert!(l.minima().count() >= 1);
    }

    #[test]
    fn rate_is_odd_under_sector_exchange(m in -0.999..0.999f64, g in 0.0..0.3f64, t in 0.05..0.6f64) {
        let p = params(g, t);
        let up = registration::registration_rhs(m, Sector::Up, &p).unwrap();
        let down = registration::registration_rhs(-m, Sector::Down, &p).unwrap();
        prop_assert!((up + down).abs() <= 1e-15 * (1.0 + up.abs()));
    }

    #[test]
    fn collapse_envelope_decreases_before_the_first_zero(n in 1u64..1_000_000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let quarter = std::f64::consts::FRAC_PI_2;
        prop_assert!(cos_power(hi * quarter, n).ln_abs <= cos_power(lo * quarter, n).ln_abs);
    }

    #[test]
    fn sector_sum_matches_the_closed_form(n in 1u64..=40, t in 0.0..60.0f64, r0 in (-0.5..0.5f64, -0.5..0.5f64)) {
        let p = ModelParams { n_spins: n, ..ModelParams::reference() };
        let r0 = Complex64::new(r0.0, r0.1);
        let a = oracles::offdiag_sector_sum(t, &p, r0);
        let b = offdiag::envelope_uniform(t, &p, r0).to_complex();
        prop_assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn echo_restores_the_block(seed in any::<u64>(), theta in 0.0..200.0f64, dg in 0.0..0.02f64) {
        let p = ModelParams { n_spins: 500, delta_g: dg, ..ModelParams::reference() };
        let c = if dg > 0.0 { offdiag::sample_couplings(&p, seed).unwrap() } else { offdiag::CouplingVector::uniform(p.coupling_g, 500) };
        let r0 = Complex64::new(0.3, 0.1);
        let tr = offdiag::spin_echo(theta, &c, r0, &[2.0 * theta]).unwrap();
        prop_assert!((tr.amplitude[0].to_complex() - r0).norm() < 1e-12);
    }

    #[test]
    fn dephasing_never_lowers_the_system_entropy(s in state()) {
        let (p, up, down) = registered();
        let fs = scenario::assemble_from(&s, p, up, down, LogAmplitude::zero()).unwrap();
        let b = scenario::entropy_budget(&s, p, &fs).unwrap();
        prop_assert!(b.s_system_final >= b.s_system_initial - 1e-15);
    }

    #[test]
    fn branch_weights_are_the_initial_diagonals(s in state()) {
        let (p, up, down) = registered();
        let fs = scenario::assemble_from(&s, p, up, down, LogAmplitude::zero()).unwrap();
        prop_assert!((fs.weight(Sector::Up) - s.r_uu).abs() < 1e-12);
        prop_assert!((fs.weight(Sector::Down) - s.r_dd).abs() < 1e-12);
        prop_assert!((fs.branches.iter().map(|b| b.weight).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
