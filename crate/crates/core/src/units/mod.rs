//! Unit operations: dynamic CSTRs, the layered secondary clarifier and
//! static (equilibrium-mode) units.

mod clarifier;
mod cstr;
mod static_units;

pub use clarifier::{settling_velocity, Clarifier, ClarifierFlows, SettlingParams, BASELINE_LAYER_TSS};
pub use cstr::Cstr;
pub use static_units::{static_convert, Conversion, StaticUnit};
