//! Uncertainty and sensitivity analysis over any [`Model`].

mod distributions;
mod model;
mod morris;
mod sampling;
mod stats;
mod sweep;

pub use distributions::{validate_specs, DistributionKind, DistributionSpec};
pub use model::{
    default_specs, evaluate_all, run_monte_carlo, Bsm1Model, Model, MonteCarloResult, RunOptions, SteadyOptions,
};
pub use morris::{morris, morris_design, n_morris, MorrisDesign, MorrisEntry, MorrisLabel, MorrisOptions, MorrisResult};
pub use sampling::{sample_lhs, sample_random, SampleMatrix, SamplingMethod};
pub use stats::{
    average_ranks, kolmogorov_sf, ks_2samp, ks_statistic, mc_filter, spearman, spearman_pair, FilterEntry,
    SpearmanResult, MIN_GROUP,
};
pub use sweep::{grid_sweep, linspace, GridResult};
