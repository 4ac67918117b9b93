//! Activated-sludge process simulation (ASM1 kinetics, BSM1 layout) with
//! uncertainty, sensitivity and techno-economic analysis.

pub mod accounting;
pub mod components;
pub mod error;
pub mod kinetics;
pub mod flowsheet;
pub mod ode;
pub mod units;
pub mod uq;

pub use error::{Error, Result};
