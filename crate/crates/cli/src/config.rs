//! Run configuration: one JSON document, one section per module.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asmbench::accounting::{ImpactIndicator, ImpactItem, Inventory, OperatingPrices, TeaInputs};
use asmbench::flowsheet::{Bsm1Settings, STEADY_TOL, T_END};
use asmbench::kinetics::Asm1Params;
use asmbench::ode::OdeOptions;
use asmbench::uq::{default_specs, Bsm1Model, DistributionSpec, Model, SamplingMethod, SteadyOptions};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub settings: Bsm1Settings,
    pub asm1: Asm1Params,
    pub distributions: Vec<DistributionSpec>,
    pub run: RunSection,
    pub filter: FilterSection,
    pub sweep: SweepSection,
    pub impact_indicators: Vec<ImpactIndicator>,
    pub impact_items: Vec<ImpactItem>,
    /// Standalone entries; the aeration and sludge entries are added per run.
    pub inventory: Inventory,
    pub tea: TeaInputs,
    pub prices: OperatingPrices,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            settings: Bsm1Settings::default(),
            asm1: Asm1Params::default(),
            distributions: default_specs(),
            run: RunSection::default(),
            filter: FilterSection::default(),
            sweep: SweepSection::default(),
            impact_indicators: Vec::new(),
            impact_items: Vec::new(),
            inventory: Inventory::default(),
            tea: TeaInputs::default(),
            prices: OperatingPrices::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Monte Carlo sample count.
    pub n: usize,
    pub sampling: SamplingMethod,
    pub n_trajectory: usize,
    pub levels: usize,
    pub bootstrap: usize,
    pub t_end: f64,
    /// Output interval of `simulate`, d.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub steady_tol: f64,
    /// Longest steady-state search, d.
    pub t_max: f64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub max_failure_rate: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        let ode = OdeOptions::default();
        Self {
            seed: 42,
            n: 1000,
            sampling: SamplingMethod::Lhs,
            n_trajectory: 50,
            levels: 4,
            bootstrap: 1000,
            t_end: T_END,
            dt: 0.25,
            rtol: ode.rtol,
            atol: ode.atol,
            steady_tol: STEADY_TOL,
            t_max: 200.0,
            workers: None,
            out: PathBuf::from("out"),
            max_failure_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    /// Metric name → discharge limit.
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        let limits = [("COD", 100.0), ("BOD5", 10.0), ("TSS", 30.0), ("TN", 18.0), ("TKN", 4.0)];
        Self {
            thresholds: limits.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub x: Axis,
    pub y: Axis,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            x: Axis {
                name: "K_La1".into(),
                min: 80.0,
                max: 300.0,
                n: 12,
            },
            y: Axis {
                name: "Q_WAS".into(),
                min: 300.0,
                max: 900.0,
                n: 13,
            },
        }
    }
}

/// Scalar overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub t_end: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn apply(&mut self, f: &Overrides) {
        let r = &mut self.run;
        if let Some(v) = &f.out {
            r.out = v.clone();
        }
        if let Some(v) = f.seed {
            r.seed = v;
        }
        if let Some(v) = f.workers {
            r.workers = Some(v);
        }
        if let Some(v) = f.t_end {
            r.t_end = v;
        }
        if let Some(v) = f.rtol {
            r.rtol = v;
        }
        if let Some(v) = f.atol {
            r.atol = v;
        }
    }

    /// Checks everything that can be checked without simulating, including
    /// that every referenced parameter name resolves.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        self.settings.validate()?;
        self.asm1.validate()?;
        let r = &self.run;
        if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
            return cfg(format!("t_end {} must be >= 0", r.t_end));
        }
        if !(r.dt > 0.0) {
            return cfg(format!("dt {} must be > 0", r.dt));
        }
        if !(r.rtol > 0.0 && r.atol > 0.0) {
            return cfg(format!("tolerances must be > 0 (rtol {}, atol {})", r.rtol, r.atol));
        }
        if !(r.steady_tol > 0.0 && r.t_max > 0.0) {
            return cfg("steady_tol and t_max must be > 0".into());
        }
        if r.workers == Some(0) {
            return cfg("workers must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&r.max_failure_rate) {
            return cfg(format!("max_failure_rate {} outside [0, 1]", r.max_failure_rate));
        }
        let names = self.model()?.parameter_names();
        for axis in [&self.sweep.x, &self.sweep.y] {
            if !names.contains(&axis.name) {
                return cfg(format!("sweep variable `{}` is not a configured distribution", axis.name));
            }
            if axis.n == 0 || !(axis.min <= axis.max) {
                return cfg(format!("sweep axis `{}` needs n >= 1 and min <= max", axis.name));
            }
        }
        let metrics = asmbench::flowsheet::Metrics::NAMES;
        for m in self.filter.thresholds.keys() {
            if !metrics.contains(&m.as_str()) {
                return cfg(format!("filter threshold for unknown metric `{m}`"));
            }
        }
        Ok(())
    }

    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.run.rtol,
            atol: self.run.atol,
            ..OdeOptions::default()
        }
    }

    pub fn steady(&self) -> SteadyOptions {
        SteadyOptions {
            tol: self.run.steady_tol,
            t_max: self.run.t_max,
            ode: self.ode(),
        }
    }

    pub fn model(&self) -> Result<Bsm1Model, CliError> {
        Ok(Bsm1Model::new(self.settings.clone(), self.asm1, self.distributions.clone())?.with_steady(self.steady()))
    }
}
