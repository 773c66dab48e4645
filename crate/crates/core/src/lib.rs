//! Exactly solvable Curie-Weiss model of a quantum measurement.
//!
//! A spin-1/2 system is measured by a magnet of `N` spins with a quartic
//! Curie-Weiss interaction, coupled weakly to a phonon bath. The crate computes
//! the equilibrium phase structure of the magnet ([`statics`]), the collapse
//! and suppressed recurrences of the off-diagonal blocks ([`offdiag`]), the
//! registration of the pointer magnetization ([`registration`]) and the final
//! state with its entropy balance ([`scenario`]). Every closed form has an
//! independent brute-force counterpart in [`oracles`].

pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod numerics;
pub mod offdiag;
pub mod oracles;
pub mod output;
pub mod registration;
pub mod scenario;
pub mod statics;

pub use error::{Error, Result};
pub use model::{validate_regime, validate_state, ModelParams, RegimeReport, Sector, SystemState2x2, HBAR};
