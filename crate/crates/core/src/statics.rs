//! Equilibrium of the magnet in a fixed field `s g`: the mean-field free
//! energy per spin, its stationary points, the critical coupling beyond which
//! the metastable paramagnet disappears, and the transition temperature.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Sector};
use crate::numerics::{atanh_clamped, roots};
use crate::output::fmt_f64 as fmt;

/// Grid nodes used to bracket fixed points on `[-1, 1]`.
pub const ROOT_GRID: usize = 10_000;
/// Bisection tolerance on stationary magnetizations.
pub const ROOT_XTOL: f64 = 1e-12;

/// Mixing entropy per spin (nats) of a magnet with magnetization `m`.
pub fn mixing_entropy(m: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&m) {
        return Err(Error::Domain { value: m, domain: "|m| <= 1" });
    }
    let up = 0.5 * (1.0 + m);
    let down = 0.5 * (1.0 - m);
    Ok(-(crate::model::xlogx(up) + crate::model::xlogx(down)))
}

/// Free energy per spin `F(m) = -s g m - J m^4 / 4 - T S(m)`.
pub fn free_energy(m: f64, sector: Sector, params: &ModelParams) -> Result<f64> {
    let s = mixing_entropy(m)?;
    Ok(-sector.sign() * params.coupling_g * m - 0.25 * params.coupling_j * m.powi(4) - params.temperature * s)
}

/// `dF/dm`.
pub fn free_energy_slope(m: f64, sector: Sector, params: &ModelParams) -> f64 {
    -sector.sign() * params.coupling_g - params.coupling_j * m.powi(3) + params.temperature * atanh_clamped(m)
}

/// `d^2F/dm^2 = -3 J m^2 + T / (1 - m^2)`; independent of the field.
pub fn free_energy_curvature(m: f64, params: &ModelParams) -> f64 {
    let one_minus = 1.0 - m * m;
    if one_minus <= 0.0 {
        return f64::INFINITY;
    }
    -3.0 * params.coupling_j * m * m + params.temperature / one_minus
}

/// Residual of the self-consistency `m = tanh((s g + J m^3) / T)`.
pub fn fixed_point_residual(m: f64, sector: Sector, params: &ModelParams) -> f64 {
    let h = sector.sign() * params.coupling_g + params.coupling_j * m.powi(3);
    m - (h / params.temperature).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    Paramagnetic,
    FerroUp,
    FerroDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub m: f64,
    pub free_energy: f64,
    pub kind: PointKind,
    pub label: PhaseLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub sector: Sector,
    /// Sorted by `m`.
    pub points: Vec<StationaryPoint>,
    pub global_minimum: usize,
}

impl Landscape {
    pub fn minima(&self) -> impl Iterator<Item = &StationaryPoint> {
        self.points.iter().filter(|p| p.kind == PointKind::Minimum)
    }

    pub fn global(&self) -> &StationaryPoint {
        &self.points[self.global_minimum]
    }

    /// The ferromagnetic minimum with the largest `|m|`; on a tie the one
    /// aligned with the field.
    pub fn ferromagnetic(&self) -> Option<&StationaryPoint> {
        let s = self.sector.sign();
        self.minima().filter(|p| p.label != PhaseLabel::Paramagnetic).max_by(|a, b| {
            a.m.abs().total_cmp(&b.m.abs()).then((s * a.m).total_cmp(&(s * b.m)))
        })
    }

    /// The paramagnetic minimum closest to `m = 0`, if it still exists.
    pub fn paramagnetic(&self) -> Option<&StationaryPoint> {
        self.minima()
            .filter(|p| p.label == PhaseLabel::Paramagnetic)
            .min_by(|a, b| a.m.abs().total_cmp(&b.m.abs()))
    }
}

/// Inflection points `m_1 < m_2` of `F` on `m >= 0`, where
/// `3 J m^2 (1 - m^2) = T`. `None` when `T >= 3J/4` and `F` is convex.
pub fn inflection_points(params: &ModelParams) -> Option<(f64, f64)> {
    let disc = 1.0 - 4.0 * params.temperature / (3.0 * params.coupling_j);
    if disc <= 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((((1.0 - r) / 2.0).sqrt(), ((1.0 + r) / 2.0).sqrt()))
}

fn label_for(m: f64, inflections: Option<(f64, f64)>) -> PhaseLabel {
    match inflections {
        Some((inner, _)) if m.abs() >= inner => {
            if m > 0.0 {
                PhaseLabel::FerroUp
            } else {
                PhaseLabel::FerroDown
            }
        }
        _ => PhaseLabel::Paramagnetic,
    }
}

/// Every solution of `m = tanh((s g + J m^3)/T)` on `[-1, 1]`, classified.
pub fn stationary_magnetizations(sector: Sector, params: &ModelParams) -> Result<Landscape> {
    stationary_magnetizations_on_grid(sector, params, ROOT_GRID)
}

pub fn stationary_magnetizations_on_grid(sector: Sector, params: &ModelParams, grid: usize) -> Result<Landscape> {
    if params.temperature <= 0.0 {
        return Err(Error::InvalidParameter { name: "temperature", reason: "must be positive".into() });
    }
    let residual = |m: f64| fixed_point_residual(m, sector, params);
    let found = roots::grid_roots(residual, -1.0, 1.0, grid, ROOT_XTOL);
    let inflections = inflection_points(params);
    let mut points = Vec::with_capacity(found.len());
    for m in found {
        let curvature = free_energy_curvature(m, params);
        points.push(StationaryPoint {
            m,
            free_energy: free_energy(m, sector, params)?,
            kind: if curvature > 0.0 { PointKind::Minimum } else { PointKind::Maximum },
            label: label_for(m, inflections),
        });
    }
    let s = sector.sign();
    let global_minimum = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == PointKind::Minimum)
        .min_by(|(_, a), (_, b)| a.free_energy.total_cmp(&b.free_energy).then((s * b.m).total_cmp(&(s * a.m))))
        .map(|(i, _)| i)
        .ok_or(Error::NoFerromagneticSolution { temperature: params.temperature })?;
    Ok(Landscape { sector, points, global_minimum })
}

/// Critical coupling `g_c`: the field at which the paramagnetic minimum of
/// `F_up` merges with the barrier. The magnetization is eliminated at the
/// inner inflection point `2 m^2 = 1 - sqrt(1 - 4T/3J)`, where the fixed
/// point becomes tangent: `g_c = T atanh(m) - J m^3`.
pub fn critical_coupling(params: &ModelParams) -> Result<f64> {
    let (m, _) = inflection_points(params).ok_or(Error::SpinodalUndefined {
        temperature: params.temperature,
        limit: 0.75 * params.coupling_j,
    })?;
    Ok(params.temperature * atanh_clamped(m) - params.coupling_j * m.powi(3))
}

/// Low-temperature limit `g_c = (2T/3) sqrt(T/3J)` of [`critical_coupling`].
pub fn critical_coupling_low_t(params: &ModelParams) -> f64 {
    let t = params.temperature;
    (2.0 * t / 3.0) * (t / (3.0 * params.coupling_j)).sqrt()
}

/// `F(m^f) - F(0)` at zero field, or `None` when no ferromagnetic minimum
/// exists at this temperature.
fn ferro_gap_energy(params: &ModelParams) -> Option<f64> {
    let p = ModelParams { coupling_g: 0.0, ..*params };
    let landscape = stationary_magnetizations(Sector::Up, &p).ok()?;
    let ferro = landscape.ferromagnetic()?;
    let f0 = free_energy(0.0, Sector::Up, &p).ok()?;
    Some(ferro.free_energy - f0)
}

/// Transition temperature at zero field: the largest `T` at which the
/// ferromagnetic minima are degenerate with the paramagnetic one.
pub fn curie_temperature(params: &ModelParams) -> f64 {
    let j = params.coupling_j;
    // Ferro minima are global at low T and gone at T >= 3J/4.
    let sign = |t: f64| {
        let p = ModelParams { temperature: t, ..*params };
        ferro_gap_energy(&p).map_or(1.0, |d| d)
    };
    let (mut lo, mut hi) = (0.05 * j, 0.75 * j);
    while hi - lo > 1e-11 * j {
        let mid = 0.5 * (lo + hi);
        if sign(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Saturation deficit of the zero-field ferromagnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FerroGap {
    /// `1 - m^f` from the self-consistency, resolved below machine epsilon.
    pub gap: f64,
    /// The coarse estimate `2 exp(-J/T)`.
    pub coarse_estimate: f64,
    /// Leading low-T behaviour `2 exp(-2J/T)` from `1 - tanh(J/T)`.
    pub saturation_estimate: f64,
}

/// `1 - m^f` at `g = 0` alongside its low-temperature estimates.
pub fn ferromagnetic_gap(params: &ModelParams) -> Result<FerroGap> {
    let p = ModelParams { coupling_g: 0.0, ..*params };
    let landscape = stationary_magnetizations(Sector::Up, &p)?;
    let ferro = landscape
        .ferromagnetic()
        .ok_or(Error::NoFerromagneticSolution { temperature: p.temperature })?;
    let (j, t) = (p.coupling_j, p.temperature);
    // Iterate the fixed point in the variable d = 1 - m, which is a strong
    // contraction near saturation: 1 - tanh(x) = 2 / (1 + e^{2x}).
    let mut d = 1.0 - ferro.m;
    for _ in 0..200 {
        let next = 2.0 / (1.0 + (2.0 * j * (1.0 - d).powi(3) / t).exp());
        if (next - d).abs() <= 1e-15 * next {
            d = next;
            break;
        }
        d = next;
    }
    Ok(FerroGap { gap: d, coarse_estimate: 2.0 * (-j / t).exp(), saturation_estimate: 2.0 * (-2.0 * j / t).exp() })
}

/// Writes `m, F_up, F_down` on a uniform grid of `samples` points.
pub fn write_landscape_csv<W: Write>(out: W, params: &ModelParams, samples: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "F_up", "F_down"])?;
    let n = samples.max(2);
    for i in 0..n {
        let m = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let up = free_energy(m, Sector::Up, params)?;
        let down = free_energy(m, Sector::Down, params)?;
        w.write_record([fmt(m), fmt(up), fmt(down)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `m, F, kind, label` for every stationary point.
pub fn write_stationary_csv<W: Write>(out: W, landscape: &Landscape) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "F", "kind", "label"])?;
    for p in &landscape.points {
        w.write_record([fmt(p.m), fmt(p.free_energy), format!("{:?}", p.kind), format!("{:?}", p.label)])?;
    }
    w.flush()?;
    Ok(())
}
