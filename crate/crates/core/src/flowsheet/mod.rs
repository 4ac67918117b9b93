//! System graphs, dynamic and equilibrium simulation, and the BSM1 plant.

mod bsm1;
mod equilibrium;
mod system;

pub use bsm1::{
    baseline_influent, baseline_initial, build_bsm1, reference_feed_tss, Bsm1, Bsm1Settings, ClarifierSettings, Metrics,
    REACTORS,
};
pub use equilibrium::{converge_equilibrium, Equilibrium, EquilibriumOptions};
pub use system::{
    scaled_residual, Sink, Source, SteadyState, StreamEdge, System, SystemGraph, Trajectory, UnitKind, Workspace,
};

/// Steady-state tolerance on the max scaled derivative, d⁻¹.
pub const STEADY_TOL: f64 = 1e-5;
/// Default simulated horizon, d.
pub const T_END: f64 = 50.0;

/// `[0, dt, 2dt, …, t_end]` with `t_end` always included.
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    if t_end <= 0.0 {
        return vec![0.0];
    }
    let n = (t_end / dt).round().max(1.0) as usize;
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}
