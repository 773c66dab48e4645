//! Model parameters, the measured spin's initial state, and the regime checks
//! that decide whether a parameter point describes a working measurement.
//!
//! Units are canonical throughout the crate: `hbar = 1` and energies are
//! quoted in units of the quartic coupling `J` when `coupling_j = 1`. Times
//! then come out in units of `hbar / J`. [`ModelParams::canonical`] rescales an
//! arbitrary parameter set into that frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in the canonical unit system.
pub const HBAR: f64 = 1.0;

/// Eigenvalue sector of the measured observable `s_z`; also the sign of the
/// effective field the system spin exerts on the magnet in that sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    Up,
    Down,
}

impl Sector {
    pub const BOTH: [Sector; 2] = [Sector::Up, Sector::Down];

    pub fn sign(self) -> f64 {
        match self {
            Sector::Up => 1.0,
            Sector::Down => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sector::Up => "up",
            Sector::Down => "down",
        }
    }
}

/// Tolerance on `Tr r = 1` and on the positivity of the 2x2 state.
pub const STATE_TOLERANCE: f64 = 1e-12;

/// Couplings, sizes and temperature of system + magnet + bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of apparatus spins `N`.
    pub n_spins: u64,
    /// Quartic Curie-Weiss coupling `J`.
    pub coupling_j: f64,
    /// Mean system-apparatus coupling `g`.
    pub coupling_g: f64,
    /// RMS dispersion of the individual couplings `g_n` around `g`.
    pub delta_g: f64,
    /// Bath temperature `T` (`k_B = 1`).
    pub temperature: f64,
    /// Dimensionless magnet-bath coupling strength.
    pub gamma: f64,
    /// Debye cutoff `Gamma` of the bath spectrum (a frequency).
    pub debye_cutoff: f64,
}

impl ModelParams {
    /// The working point used throughout the examples: `T = 0.34 J`,
    /// `g = 0.09 J`, `N = 10^5`, `gamma = 10^-3`, `Gamma = 50 J/hbar`.
    pub fn reference() -> Self {
        Self {
            n_spins: 100_000,
            coupling_j: 1.0,
            coupling_g: 0.09,
            delta_g: 0.0,
            temperature: 0.34,
            gamma: 1e-3,
            debye_cutoff: 50.0,
        }
    }

    pub fn n(&self) -> f64 {
        self.n_spins as f64
    }

    /// Structural checks. Regime inequalities are reported separately by
    /// [`validate_regime`] and never rejected here.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("coupling_j", self.coupling_j),
            ("coupling_g", self.coupling_g),
            ("delta_g", self.delta_g),
            ("temperature", self.temperature),
            ("gamma", self.gamma),
            ("debye_cutoff", self.debye_cutoff),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("{v} is not finite")));
            }
        }
        if self.n_spins < 1 {
            return Err(invalid("n_spins", "must be at least 1".into()));
        }
        if self.coupling_j <= 0.0 {
            return Err(invalid("coupling_j", "must be positive".into()));
        }
        if self.coupling_g < 0.0 {
            return Err(invalid("coupling_g", "must be non-negative".into()));
        }
        if self.delta_g < 0.0 {
            return Err(invalid("delta_g", "must be non-negative".into()));
        }
        if self.coupling_g > 0.0 && self.delta_g >= self.coupling_g {
            return Err(invalid("delta_g", "must be smaller than coupling_g".into()));
        }
        if self.temperature <= 0.0 {
            return Err(invalid("temperature", "must be positive".into()));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", "must be non-negative".into()));
        }
        if self.debye_cutoff <= 0.0 {
            return Err(invalid("debye_cutoff", "must be positive".into()));
        }
        Ok(())
    }

    /// Rescale to `J = 1`. Returns the rescaled parameters and the energy
    /// scale needed to undo the transformation.
    pub fn canonical(&self) -> (ModelParams, EnergyScale) {
        let scale = EnergyScale(self.coupling_j);
        (scale.reduce(self), scale)
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// Energy unit used to bring parameters into the `J = 1` frame.
///
/// With `hbar = 1` a frequency carries the same unit as an energy, so the
/// Debye cutoff scales like the couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScale(pub f64);

impl EnergyScale {
    pub fn reduce(&self, p: &ModelParams) -> ModelParams {
        let e = self.0;
        ModelParams {
            n_spins: p.n_spins,
            coupling_j: p.coupling_j / e,
            coupling_g: p.coupling_g / e,
            delta_g: p.delta_g / e,
            temperature: p.temperature / e,
            gamma: p.gamma,
            debye_cutoff: p.debye_cutoff / e,
        }
    }

    pub fn restore(&self, p: &ModelParams) -> ModelParams {
        let e = self.0;
        ModelParams {
            n_spins: p.n_spins,
            coupling_j: p.coupling_j * e,
            coupling_g: p.coupling_g * e,
            delta_g: p.delta_g * e,
            temperature: p.temperature * e,
            gamma: p.gamma,
            debye_cutoff: p.debye_cutoff * e,
        }
    }

    /// Convert a time in canonical units `hbar / J` back to `hbar / E`.
    pub fn restore_time(&self, t: f64) -> f64 {
        t / self.0
    }
}

/// Initial 2x2 density matrix `r(0)` of the measured spin in the up/down basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState2x2 {
    pub r_uu: f64,
    pub r_dd: f64,
    pub r_ud: Complex64,
}

impl SystemState2x2 {
    /// Builds `r` from its upper diagonal entry and the off-diagonal element;
    /// `r_dd` is fixed by the trace.
    pub fn new(r_uu: f64, r_ud: Complex64) -> Self {
        Self { r_uu, r_dd: 1.0 - r_uu, r_ud }
    }

    pub fn spin_up() -> Self {
        Self::new(1.0, Complex64::new(0.0, 0.0))
    }

    pub fn spin_down() -> Self {
        Self::new(0.0, Complex64::new(0.0, 0.0))
    }

    /// Pure state `(|up> + |down>)/sqrt(2)`.
    pub fn equal_superposition() -> Self {
        Self::new(0.5, Complex64::new(0.5, 0.0))
    }

    pub fn determinant(&self) -> f64 {
        self.r_uu * self.r_dd - self.r_ud.norm_sqr()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.r_uu + self.r_dd);
        let half_gap = (0.25 * (self.r_uu - self.r_dd).powi(2) + self.r_ud.norm_sqr()).sqrt();
        [mean - half_gap, mean + half_gap]
    }

    /// Von Neumann entropy `-Tr r ln r` in nats.
    pub fn entropy(&self) -> f64 {
        -self.eigenvalues().iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    /// The state with its off-diagonal blocks removed, `sum_i P_i r P_i`.
    pub fn dephased(&self) -> Self {
        Self { r_uu: self.r_uu, r_dd: self.r_dd, r_ud: Complex64::new(0.0, 0.0) }
    }
}

/// `x ln x` with the continuous extension `0` at `x <= 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Returns the state if it has unit trace and is positive semidefinite.
pub fn validate_state(state: SystemState2x2) -> Result<SystemState2x2> {
    let values = [state.r_uu, state.r_dd, state.r_ud.re, state.r_ud.im];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { value: f64::NAN, domain: "finite matrix entries" });
    }
    let trace = state.r_uu + state.r_dd;
    if (trace - 1.0).abs() > STATE_TOLERANCE {
        return Err(Error::Trace { trace });
    }
    let det = state.determinant();
    if state.r_uu < -STATE_TOLERANCE || state.r_dd < -STATE_TOLERANCE || det < -STATE_TOLERANCE {
        return Err(Error::Positivity { determinant: det });
    }
    Ok(state)
}

/// One inequality of the validity regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// `lhs / rhs`; compare with the margin factor.
    pub margin: f64,
    /// Whether the check enters `overall_valid`.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub margin_factor: f64,
    pub checks: Vec<RegimeCheck>,
    pub bath_branch: bool,
    pub dispersion_branch: bool,
    pub overall_valid: bool,
}

impl RegimeReport {
    pub fn check(&self, name: &str) -> Option<&RegimeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Default factor used to read "much greater than".
pub const DEFAULT_MARGIN: f64 = 10.0;

fn much_greater(name: &str, lhs: f64, rhs: f64, margin: f64, required: bool) -> RegimeCheck {
    RegimeCheck {
        name: name.to_string(),
        lhs,
        rhs,
        pass: lhs > margin * rhs,
        margin: lhs / rhs,
        required,
    }
}

/// Evaluates the inequalities under which collapse and registration happen.
///
/// The off-diagonal blocks die if `N >> 1` and either the bath branch
/// `N >> (1/gamma)(g/hbar Gamma)^2` or the dispersion branch
/// `N >> g^2/delta_g^2` holds. The relaxation equations additionally need
/// `hbar Gamma >> T >> gamma J` and `hbar Gamma >> J > g`. `gamma << 1` is
/// reported but does not gate the verdict.
pub fn validate_regime(params: &ModelParams, margin: f64) -> RegimeReport {
    let p = params;
    let n = p.n();
    let bath_rhs = if p.gamma > 0.0 {
        (1.0 / p.gamma) * (p.coupling_g / (HBAR * p.debye_cutoff)).powi(2)
    } else {
        f64::INFINITY
    };
    let dispersion_rhs = if p.delta_g > 0.0 {
        (p.coupling_g / p.delta_g).powi(2)
    } else {
        f64::INFINITY
    };
    let hg = HBAR * p.debye_cutoff;

    let checks = vec![
        much_greater("N >> 1", n, 1.0, margin, true),
        much_greater("N >> (1/gamma)(g/hbar Gamma)^2", n, bath_rhs, margin, false),
        much_greater("N >> g^2/delta_g^2", n, dispersion_rhs, margin, false),
        much_greater("hbar Gamma >> T", hg, p.temperature, margin, true),
        much_greater("T >> gamma J", p.temperature, p.gamma * p.coupling_j, margin, true),
        much_greater("hbar Gamma >> J", hg, p.coupling_j, margin, true),
        RegimeCheck {
            name: "J > g".into(),
            lhs: p.coupling_j,
            rhs: p.coupling_g,
            pass: p.coupling_j > p.coupling_g,
            margin: p.coupling_j / p.coupling_g,
            required: true,
        },
        much_greater("1 >> gamma", 1.0, p.gamma, margin, false),
    ];
    let bath_branch = checks[1].pass;
    let dispersion_branch = checks[2].pass;
    let overall_valid =
        checks.iter().filter(|c| c.required).all(|c| c.pass) && (bath_branch || dispersion_branch);
    RegimeReport { margin_factor: margin, checks, bath_branch, dispersion_branch, overall_valid }
}
