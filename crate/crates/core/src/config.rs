//! Flat `key = value` run configuration.
//!
//! ```text
//! # reference point
//! n_spins = 100000
//! coupling_j = 1
//! coupling_g = 0.09
//! delta_g = 0
//! temperature = 0.34
//! gamma = 1e-3
//! debye_cutoff = 50
//! r_uu = 0.5
//! re_r_ud = 0.5
//! im_r_ud = 0
//! ```
//!
//! The ten keys above are required. Optional run keys: `t_max`, `samples`,
//! `grid` (`log` or `linear`), `bath` and `dispersion` (`on`/`off`), `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_state, ModelParams, SystemState2x2};

pub const PARAM_KEYS: [&str; 10] =
    ["n_spins", "coupling_j", "coupling_g", "delta_g", "temperature", "gamma", "debye_cutoff", "r_uu", "re_r_ud", "im_r_ud"];
pub const RUN_KEYS: [&str; 6] = ["t_max", "samples", "grid", "bath", "dispersion", "seed"];
/// Keys a sweep axis may vary.
pub const SWEEP_KEYS: [&str; 9] =
    ["n_spins", "coupling_j", "coupling_g", "delta_g", "temperature", "gamma", "debye_cutoff", "r_uu", "t_max"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub state: SystemState2x2,
    pub t_max: Option<f64>,
    pub samples: usize,
    pub grid: Spacing,
    /// `None` means "on exactly when the parameters allow it".
    pub bath: Option<bool>,
    pub dispersion: Option<bool>,
    pub seed: u64,
}

impl RunConfig {
    pub fn reference() -> Self {
        Self {
            params: ModelParams::reference(),
            state: SystemState2x2::equal_superposition(),
            t_max: None,
            samples: 2000,
            grid: Spacing::Log,
            bath: None,
            dispersion: None,
            seed: 0,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !PARAM_KEYS.contains(&key) && !RUN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let missing: Vec<&str> = PARAM_KEYS.iter().copied().filter(|k| !entries.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing keys: {}", missing.join(", "))));
        }
        let mut cfg = Self::reference();
        let mut r = [0.0; 3];
        for (key, value) in &entries {
            match key.as_str() {
                "r_uu" => r[0] = number(key, value)?,
                "re_r_ud" => r[1] = number(key, value)?,
                "im_r_ud" => r[2] = number(key, value)?,
                _ => cfg.set(key, value)?,
            }
        }
        cfg.state = validate_state(SystemState2x2::new(r[0], Complex64::new(r[1], r[2])))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "n_spins" => {
                let n = number(key, value)?;
                if n < 1.0 || n.fract() != 0.0 || n > u64::MAX as f64 {
                    return Err(Error::Config(format!("n_spins must be a positive integer, got `{value}`")));
                }
                p.n_spins = n as u64;
            }
            "coupling_j" => p.coupling_j = number(key, value)?,
            "coupling_g" => p.coupling_g = number(key, value)?,
            "delta_g" => p.delta_g = number(key, value)?,
            "temperature" => p.temperature = number(key, value)?,
            "gamma" => p.gamma = number(key, value)?,
            "debye_cutoff" => p.debye_cutoff = number(key, value)?,
            "r_uu" => {
                let r_uu = number(key, value)?;
                self.state = SystemState2x2::new(r_uu, self.state.r_ud);
            }
            "re_r_ud" => self.state = SystemState2x2::new(self.state.r_uu, Complex64::new(number(key, value)?, self.state.r_ud.im)),
            "im_r_ud" => self.state = SystemState2x2::new(self.state.r_uu, Complex64::new(self.state.r_ud.re, number(key, value)?)),
            "t_max" => {
                let t = number(key, value)?;
                if !(t > 0.0) {
                    return Err(Error::Config(format!("t_max must be positive, got `{value}`")));
                }
                self.t_max = Some(t);
            }
            "samples" => {
                self.samples = value
                    .parse::<usize>()
                    .ok()
                    .filter(|&s| s >= 2)
                    .ok_or_else(|| Error::Config(format!("samples must be an integer >= 2, got `{value}`")))?;
            }
            "grid" => {
                self.grid = match value {
                    "log" => Spacing::Log,
                    "linear" => Spacing::Linear,
                    _ => return Err(Error::Config(format!("grid must be `log` or `linear`, got `{value}`"))),
                }
            }
            "bath" => self.bath = Some(switch(key, value)?),
            "dispersion" => self.dispersion = Some(switch(key, value)?),
            "seed" => {
                self.seed = value.parse().map_err(|_| Error::Config(format!("seed must be a non-negative integer, got `{value}`")))?
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Structural checks on parameters, state and mechanism toggles.
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        validate_state(self.state)?;
        if self.bath == Some(true) && self.params.gamma == 0.0 {
            return Err(Error::Config("bath = on requires gamma > 0".into()));
        }
        if self.dispersion == Some(true) && self.params.delta_g == 0.0 {
            return Err(Error::Config("dispersion = on requires delta_g > 0".into()));
        }
        Ok(())
    }

    pub fn bath_active(&self) -> bool {
        self.bath.unwrap_or(self.params.gamma > 0.0)
    }

    pub fn dispersion_active(&self) -> bool {
        self.dispersion.unwrap_or(self.params.delta_g > 0.0)
    }

    /// Sample times on `[0, t_max]`; log grids start at `t_max * 1e-4`
    /// after an initial `t = 0`.
    pub fn time_grid(&self, t_max: f64) -> Vec<f64> {
        let n = self.samples.max(2);
        match self.grid {
            Spacing::Linear => (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect(),
            Spacing::Log => {
                let lo = (t_max * 1e-4).ln();
                let hi = t_max.ln();
                let mut out = vec![0.0];
                out.extend((0..n - 1).map(|k| {
                    if k == n - 2 {
                        t_max
                    } else {
                        (lo + (hi - lo) * k as f64 / (n - 2).max(1) as f64).exp()
                    }
                }));
                out
            }
        }
    }

    /// Renders back to the file format; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "n_spins = {}", p.n_spins);
        let _ = writeln!(s, "coupling_j = {:?}", p.coupling_j);
        let _ = writeln!(s, "coupling_g = {:?}", p.coupling_g);
        let _ = writeln!(s, "delta_g = {:?}", p.delta_g);
        let _ = writeln!(s, "temperature = {:?}", p.temperature);
        let _ = writeln!(s, "gamma = {:?}", p.gamma);
        let _ = writeln!(s, "debye_cutoff = {:?}", p.debye_cutoff);
        let _ = writeln!(s, "r_uu = {:?}", self.state.r_uu);
        let _ = writeln!(s, "re_r_ud = {:?}", self.state.r_ud.re);
        let _ = writeln!(s, "im_r_ud = {:?}", self.state.r_ud.im);
        if let Some(t) = self.t_max {
            let _ = writeln!(s, "t_max = {t:?}");
        }
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "grid = {}", if self.grid == Spacing::Log { "log" } else { "linear" });
        if let Some(b) = self.bath {
            let _ = writeln!(s, "bath = {}", if b { "on" } else { "off" });
        }
        if let Some(d) = self.dispersion {
            let _ = writeln!(s, "dispersion = {}", if d { "on" } else { "off" });
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("`{key}` expects a finite number, got `{value}`")))
}

fn switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects on/off, got `{value}`"))),
    }
}

/// One sweep axis, `KEY=START:STOP:STEPS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub key: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepAxis {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config(format!("sweep axis must be KEY=START:STOP:STEPS, got `{spec}`"));
        let (key, range) = spec.split_once('=').ok_or_else(bad)?;
        let key = key.trim();
        if !SWEEP_KEYS.contains(&key) {
            return Err(Error::Config(format!("`{key}` cannot be swept; choose one of {}", SWEEP_KEYS.join(", "))));
        }
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = number(key, parts[0].trim())?;
        let stop = number(key, parts[1].trim())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 {
            return Err(Error::Config(format!("sweep axis `{key}` is empty")));
        }
        Ok(Self { key: key.to_string(), start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps).map(|k| self.start + (self.stop - self.start) * k as f64 / (self.steps - 1) as f64).collect()
    }
}
