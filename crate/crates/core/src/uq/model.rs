use rayon::prelude::*;

use super::distributions::{validate_specs, DistributionSpec};
use super::sampling::SampleMatrix;
use crate::error::{Error, Result};
use crate::flowsheet::{build_bsm1, Bsm1, Bsm1Settings, Metrics, STEADY_TOL};
use crate::kinetics::Asm1Params;
use crate::ode::OdeOptions;

/// Maps a parameter vector (aligned with [`Model::parameters`]) to metrics.
pub trait Model: Sync {
    fn parameters(&self) -> &[DistributionSpec];
    fn metric_names(&self) -> Vec<String>;
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn baseline(&self) -> Vec<f64> {
        self.parameters().iter().map(|s| s.baseline).collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.parameters().iter().map(|s| s.name.clone()).collect()
    }
}

/// Evaluates every point, in parallel when more than one worker is
/// available. Results come back in input order whatever the scheduling.
pub fn evaluate_all<M: Model + ?Sized>(model: &M, points: &[Vec<f64>], workers: Option<usize>) -> Vec<Result<Vec<f64>>> {
    let run = || points.par_iter().map(|x| model.evaluate(x)).collect::<Vec<_>>();
    match workers {
        Some(1) => points.iter().map(|x| model.evaluate(x)).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

/// Steady-state search used for every sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub tol: f64,
    pub t_max: f64,
    pub ode: OdeOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: STEADY_TOL,
            t_max: 200.0,
            ode: OdeOptions::default(),
        }
    }
}

/// BSM1 with a set of uncertain inputs resolved by name against the ASM1
/// parameters first and the plant settings second.
#[derive(Debug, Clone)]
pub struct Bsm1Model {
    pub settings: Bsm1Settings,
    pub params: Asm1Params,
    pub steady: SteadyOptions,
    specs: Vec<DistributionSpec>,
}

impl Bsm1Model {
    pub fn new(settings: Bsm1Settings, params: Asm1Params, specs: Vec<DistributionSpec>) -> Result<Self> {
        validate_specs(&specs)?;
        let model = Self {
            settings,
            params,
            steady: SteadyOptions::default(),
            specs,
        };
        let mut s = model.settings.clone();
        let mut p = model.params;
        for spec in &model.specs {
            set_by_name(&mut s, &mut p, &spec.name, spec.baseline)?;
        }
        Ok(model)
    }

    /// The 28-input binding: 20 ASM1 parameters and 8 plant settings.
    pub fn default_binding() -> Self {
        Self::new(Bsm1Settings::default(), Asm1Params::default(), default_specs()).expect("default binding is valid")
    }

    pub fn with_steady(mut self, steady: SteadyOptions) -> Self {
        self.steady = steady;
        self
    }

    pub fn configure(&self, x: &[f64]) -> Result<(Bsm1Settings, Asm1Params)> {
        if x.len() != self.specs.len() {
            return Err(Error::Dimension {
                expected: self.specs.len(),
                got: x.len(),
            });
        }
        let mut s = self.settings.clone();
        let mut p = self.params;
        for (spec, &v) in self.specs.iter().zip(x) {
            set_by_name(&mut s, &mut p, &spec.name, v)?;
        }
        p.validate()?;
        Ok((s, p))
    }

    pub fn plant(&self, x: &[f64]) -> Result<Bsm1> {
        let (s, p) = self.configure(x)?;
        build_bsm1(&s, &p)
    }
}

fn set_by_name(s: &mut Bsm1Settings, p: &mut Asm1Params, name: &str, v: f64) -> Result<()> {
    if Asm1Params::NAMES.contains(&name) {
        p.set(name, v)
    } else {
        s.set(name, v)
    }
}

impl Model for Bsm1Model {
    fn parameters(&self) -> &[DistributionSpec] {
        &self.specs
    }

    fn metric_names(&self) -> Vec<String> {
        Metrics::NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let plant = self.plant(x)?;
        let o = self.steady;
        let ss = plant.steady_state(o.tol, o.t_max, o.ode)?;
        Ok(plant.metrics(&ss.state)?.to_array().to_vec())
    }
}

/// Uncertainty ranges of the plant settings (uniform) and ASM1 parameters
/// (triangular, mode at the baseline).
pub fn default_specs() -> Vec<DistributionSpec> {
    let q_in = Bsm1Settings::default().q_in;
    let u = DistributionSpec::uniform;
    let mut specs = vec![
        u("DO_sat", 7.2, 8.8, 8.0),
        u("V_a", 900.0, 1000.0, 1000.0),
        u("V_o", 1200.0, 1333.0, 1333.0),
        u("K_La1", 180.0, 360.0, 240.0),
        u("K_La2", 75.6, 92.4, 84.0),
        u("Q_RAS", 0.75 * q_in, q_in, q_in),
        u("Q_WAS", 346.5, 423.5, 385.0),
        u("Q_intr", 2.25 * q_in, 3.75 * q_in, 3.0 * q_in),
    ];
    let asm1 = [
        ("Y_H", 0.64, 0.67, 0.70),
        ("Y_A", 0.23, 0.24, 0.25),
        ("f_Pobs", 0.16, 0.21, 0.26),
        ("i_XB", 0.04, 0.08, 0.12),
        ("i_XP", 0.057, 0.06, 0.063),
        ("f_SS_COD", 0.7, 0.75, 0.95),
        ("mu_H", 3.0, 4.0, 5.0),
        ("K_S", 5.0, 10.0, 15.0),
        ("K_OH", 0.1, 0.2, 0.3),
        ("K_NO", 0.25, 0.5, 0.75),
        ("b_H", 0.285, 0.3, 0.315),
        ("mu_A", 0.475, 0.5, 0.525),
        ("K_NH", 0.5, 1.0, 1.5),
        ("K_OA", 0.3, 0.4, 0.5),
        ("b_A", 0.04, 0.05, 0.06),
        ("eta_g", 0.6, 0.8, 1.0),
        ("k_a", 0.03, 0.05, 0.08),
        ("k_h", 2.25, 3.0, 3.75),
        ("K_X", 0.075, 0.1, 0.125),
        ("eta_h", 0.6, 0.8, 1.0),
    ];
    specs.extend(asm1.iter().map(|&(n, lo, m, hi)| DistributionSpec::triangular(n, lo, m, hi, m)));
    specs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub workers: Option<usize>,
    /// Largest tolerated fraction of failed samples.
    pub max_failure_rate: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: None,
            max_failure_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub metric_names: Vec<String>,
    /// One row per sample; `None` for samples that did not converge.
    pub rows: Vec<Option<Vec<f64>>>,
    /// Sample index and reason of every failure.
    pub failures: Vec<(usize, String)>,
}

impl MonteCarloResult {
    pub fn converged(&self) -> Vec<bool> {
        self.rows.iter().map(Option::is_some).collect()
    }

    pub fn n_converged(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.as_ref().map(|v| v[j])).collect()
    }

    pub fn column_of(&self, name: &str) -> Option<Vec<Option<f64>>> {
        self.metric_names.iter().position(|n| n == name).map(|j| self.column(j))
    }

    /// Fraction of converged samples with `metric > threshold`.
    pub fn exceedance(&self, metric: &str, threshold: f64) -> Option<f64> {
        let col = self.column_of(metric)?;
        let vals: Vec<f64> = col.into_iter().flatten().collect();
        if vals.is_empty() {
            return None;
        }
        Some(vals.iter().filter(|&&v| v > threshold).count() as f64 / vals.len() as f64)
    }
}

/// Evaluates `model` at every row of `samples`. Failed samples are kept as
/// `None`; more than `max_failure_rate` of them aborts the run.
pub fn run_monte_carlo<M: Model + ?Sized>(model: &M, samples: &SampleMatrix, opts: &RunOptions) -> Result<MonteCarloResult> {
    if samples.names != model.parameter_names() {
        return Err(Error::InvalidParameter(format!(
            "sample columns {:?} do not match the model parameters {:?}",
            samples.names,
            model.parameter_names()
        )));
    }
    if samples.is_empty() {
        return Err(Error::Empty("sample matrix"));
    }
    let results = evaluate_all(model, &samples.rows, opts.workers);
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => rows.push(Some(v)),
            Err(e) => {
                failures.push((i, e.to_string()));
                rows.push(None);
            }
        }
    }
    let total = rows.len();
    if failures.len() as f64 > opts.max_failure_rate * total as f64 {
        return Err(Error::ConvergenceRate {
            failed: failures.len(),
            total,
            first: failures[0].1.clone(),
        });
    }
    Ok(MonteCarloResult {
        metric_names: model.metric_names(),
        rows,
        failures,
    })
}
