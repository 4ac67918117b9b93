//! Scenario runners. Each one reads the config, runs, and writes its CSVs
//! under the output directory.

use std::path::{Path, PathBuf};

use asmbench::accounting::{
    bsm1_aeration_energy, bsm1_operating_bindings, lca_total, tea_annualize, LinkContext, TeaInputs,
};
use asmbench::flowsheet::{build_bsm1, time_grid, Bsm1, Bsm1Settings, Metrics};
use asmbench::uq::{
    grid_sweep, linspace, mc_filter, morris, run_monte_carlo, sample_lhs, sample_random, spearman, Bsm1Model,
    Model, MonteCarloResult, MorrisOptions, RunOptions, SampleMatrix, SamplingMethod,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{float, Table};

fn out(cfg: &RunConfig, file: &str) -> PathBuf {
    cfg.run.out.join(file)
}

fn plant(cfg: &RunConfig) -> Result<Bsm1, CliError> {
    Ok(build_bsm1(&cfg.settings, &cfg.asm1)?)
}

pub fn simulate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let p = plant(cfg)?;
    let grid = time_grid(cfg.run.t_end, cfg.run.dt);
    let tr = p.simulate(&grid, cfg.ode())?;
    let mut t = Table::new(std::iter::once("t_d".to_string()).chain(p.system.state_labels()));
    for (time, y) in tr.t.iter().zip(&tr.states) {
        t.push(std::iter::once(*time).chain(y.iter().copied()).map(float).collect());
    }
    let path = out(cfg, "trajectory.csv");
    t.write(&path)?;
    Ok(path)
}

pub fn steady(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = plant(cfg)?;
    let s = cfg.steady();
    let ss = p.steady_state(s.tol, s.t_max, s.ode)?;
    let m = p.metrics(&ss.state)?;
    let header = std::iter::once("t_d".to_string())
        .chain(p.system.state_labels())
        .chain(Metrics::NAMES.iter().map(|s| s.to_string()));
    let mut t = Table::new(header);
    t.push(
        std::iter::once(ss.t)
            .chain(ss.state.iter().copied())
            .chain(m.to_array())
            .map(float)
            .collect(),
    );
    let path = out(cfg, "steady.csv");
    t.write(&path)?;
    let tea = out(cfg, "tea_lca.csv");
    accounting_table(cfg, &[("baseline".into(), cfg.settings.clone(), m)])?.write(&tea)?;
    Ok(vec![path, tea])
}

/// One row per scenario: costs, indicator totals, then breakdown columns.
fn accounting_table(cfg: &RunConfig, scenarios: &[(String, Bsm1Settings, Metrics)]) -> Result<Table, CliError> {
    let indicators = &cfg.impact_indicators;
    let mut header: Vec<String> = [
        "scenario",
        "net_annual_cost",
        "per_capita_annual_cost",
        "annualized_capital",
        "annual_opex",
        "annual_revenue",
        "income_tax",
        "aeration_energy_kWh_d",
        "sludge_production_kg_d",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(cfg.tea.capital.iter().map(|c| format!("capital:{}", c.id)));
    header.extend(indicators.iter().map(|i| i.id.clone()));
    let mut breakdown_header_done = false;
    let mut rows = Vec::new();
    for (name, settings, metrics) in scenarios {
        let ctx = LinkContext { settings, metrics };
        let b = bsm1_operating_bindings(&ctx, &cfg.prices, bsm1_aeration_energy);
        let tea = tea_annualize(&TeaInputs {
            opex_per_day: cfg.tea.opex_per_day + b.opex_per_day,
            ..cfg.tea.clone()
        })?;
        let mut row = vec![
            name.clone(),
            float(tea.net_annual_cost),
            tea.per_capita.map_or(String::new(), float),
            float(tea.annualized_capital),
            float(tea.annual_opex),
            float(tea.annual_revenue),
            float(tea.tax),
            float(b.inventory.entries[0].quantity),
            float(b.inventory.entries[1].quantity),
        ];
        row.extend(tea.breakdown.iter().map(|c| float(c.1)));
        if !indicators.is_empty() {
            let mut inv = cfg.inventory.clone();
            inv.extend(b.inventory);
            let lca = lca_total(&inv, &cfg.impact_items, indicators, cfg.tea.n)?;
            row.extend(lca.totals.iter().copied().map(float));
            if !breakdown_header_done {
                for (item, _) in &lca.breakdown {
                    header.extend(indicators.iter().map(|i| format!("{item}:{}", i.id)));
                }
                breakdown_header_done = true;
            }
            row.extend(lca.breakdown.iter().flat_map(|b| b.1.iter().copied().map(float)));
        }
        rows.push(row);
    }
    let mut t = Table::new(header);
    for r in rows {
        t.push(r);
    }
    Ok(t)
}

fn sample(cfg: &RunConfig, model: &Bsm1Model) -> Result<SampleMatrix, CliError> {
    let f = match cfg.run.sampling {
        SamplingMethod::Lhs => sample_lhs,
        SamplingMethod::Random => sample_random,
    };
    Ok(f(model.parameters(), cfg.run.n, cfg.run.seed)?)
}

fn check_rate(failed: usize, total: usize, limit: f64, first: Option<&str>) -> Result<(), CliError> {
    if failed as f64 > limit * total as f64 {
        let mut msg = format!("{failed} of {total} samples failed (limit {:.0}%)", 100.0 * limit);
        if let Some(f) = first {
            msg += &format!("; first failure: {f}");
        }
        return Err(CliError::ConvergenceRate(msg));
    }
    Ok(())
}

/// Writes samples.csv and metrics.csv, then fails with exit code 4 when too
/// many samples did not converge.
pub fn uncertainty(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let samples = sample(cfg, &model)?;
    let opts = RunOptions {
        workers: cfg.run.workers,
        max_failure_rate: 1.0,
    };
    let mc = run_monte_carlo(&model, &samples, &opts)?;
    let paths = vec![out(cfg, "samples.csv"), out(cfg, "metrics.csv")];
    samples_table(&samples).write(&paths[0])?;
    metrics_table(&mc).write(&paths[1])?;
    eprintln!("uncertainty: {} samples, {} converged", samples.len(), mc.n_converged());
    check_rate(mc.failures.len(), samples.len(), cfg.run.max_failure_rate, mc.failures.first().map(|f| f.1.as_str()))?;
    Ok(paths)
}

fn samples_table(s: &SampleMatrix) -> Table {
    let mut t = Table::new(s.names.clone());
    for r in &s.rows {
        t.push(r.iter().copied().map(float).collect());
    }
    t
}

fn metrics_table(mc: &MonteCarloResult) -> Table {
    let mut t = Table::new(mc.metric_names.iter().cloned().chain(std::iter::once("converged".into())));
    for r in &mc.rows {
        let mut row: Vec<String> = match r {
            Some(v) => v.iter().copied().map(float).collect(),
            None => vec![String::new(); mc.metric_names.len()],
        };
        row.push(r.is_some().to_string());
        t.push(row);
    }
    t
}

pub fn morris_cmd(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let model = cfg.model()?;
    let opts = MorrisOptions {
        n_trajectory: cfg.run.n_trajectory,
        levels: cfg.run.levels,
        seed: cfg.run.seed,
        bootstrap: cfg.run.bootstrap,
        workers: cfg.run.workers,
    };
    let r = morris(&model, &opts)?;
    eprintln!("morris: {} simulations, {} failed", r.n_simulations, r.failed);
    let mut t = Table::new([
        "parameter",
        "metric",
        "mu",
        "mu_star",
        "sigma",
        "mu_star_norm",
        "sigma_norm",
        "ci95",
        "label",
    ]);
    for e in &r.entries {
        t.push(vec![
            e.parameter.clone(),
            e.metric.clone(),
            float(e.mu),
            float(e.mu_star),
            float(e.sigma),
            float(e.mu_star_norm),
            float(e.sigma_norm),
            float(e.ci95),
            format!("{:?}", e.label),
        ]);
    }
    let path = out(cfg, "morris.csv");
    t.write(&path)?;
    check_rate(r.failed, r.n_simulations, cfg.run.max_failure_rate, None)?;
    Ok(path)
}

/// Monte Carlo filtering and Spearman ranks over an existing samples/metrics
/// pair.
pub fn filter(cfg: &RunConfig, samples: &Path, metrics: &Path) -> Result<Vec<PathBuf>, CliError> {
    let st = Table::read(samples)?;
    let mt = Table::read(metrics)?;
    if st.rows.len() != mt.rows.len() {
        return Err(CliError::Config(format!(
            "{} has {} rows but {} has {}",
            samples.display(),
            st.rows.len(),
            metrics.display(),
            mt.rows.len()
        )));
    }
    let mut cols = Vec::with_capacity(st.header.len());
    for j in 0..st.header.len() {
        let c = st.floats(j)?;
        if c.iter().any(Option::is_none) {
            return Err(CliError::Config(format!("{}: empty cell in `{}`", samples.display(), st.header[j])));
        }
        cols.push(c.into_iter().flatten().collect::<Vec<f64>>());
    }
    let matrix = SampleMatrix {
        names: st.header.clone(),
        rows: (0..st.rows.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
        seed: cfg.run.seed,
        method: cfg.run.sampling,
    };
    let metric_names: Vec<String> = mt.header.iter().filter(|h| *h != "converged").cloned().collect();
    let metric_idx = mt.require(&metric_names.iter().map(String::as_str).collect::<Vec<_>>(), &metrics.display().to_string())?;
    let metric_cols: Vec<Vec<Option<f64>>> = metric_idx.iter().map(|&j| mt.floats(j)).collect::<Result<_, _>>()?;

    let mut ft = Table::new(["parameter", "metric", "threshold", "D", "p", "n_above", "n_below", "low_confidence"]);
    for (metric, &threshold) in &cfg.filter.thresholds {
        let Some(k) = metric_names.iter().position(|m| m == metric) else {
            return Err(CliError::Config(format!("{} has no `{metric}` column", metrics.display())));
        };
        for e in mc_filter(&matrix, metric, &metric_cols[k], threshold)? {
            ft.push(vec![
                e.parameter,
                e.metric,
                float(threshold),
                float(e.d),
                float(e.p),
                e.n_above.to_string(),
                e.n_below.to_string(),
                e.low_confidence.to_string(),
            ]);
        }
    }
    let rows: Vec<Option<Vec<f64>>> = (0..mt.rows.len())
        .map(|i| metric_cols.iter().map(|c| c[i]).collect::<Option<Vec<f64>>>())
        .collect();
    let sp = spearman(&matrix, &metric_names, &rows)?;
    let mut stab = Table::new(["parameter", "metric", "rho", "constant"]);
    for (i, p) in sp.parameters.iter().enumerate() {
        for (j, m) in sp.metrics.iter().enumerate() {
            stab.push(vec![p.clone(), m.clone(), float(sp.rho[i][j]), sp.constant[i][j].to_string()]);
        }
    }
    let paths = vec![out(cfg, "filter.csv"), out(cfg, "spearman.csv")];
    ft.write(&paths[0])?;
    stab.write(&paths[1])?;
    Ok(paths)
}

/// Metrics over the configured two-variable grid, plus the operating cost
/// and impacts of every grid point.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let (ax, ay) = (&cfg.sweep.x, &cfg.sweep.y);
    let xs = linspace(ax.min, ax.max, ax.n);
    let ys = linspace(ay.min, ay.max, ay.n);
    let g = grid_sweep(&model, &ax.name, &xs, &ay.name, &ys, cfg.run.workers)?;
    let header = [ax.name.clone(), ay.name.clone()]
        .into_iter()
        .chain(g.metric_names.iter().cloned())
        .chain(std::iter::once("converged".into()));
    let mut t = Table::new(header);
    let names = model.parameter_names();
    let (ix, iy) = (
        names.iter().position(|n| *n == ax.name).unwrap(),
        names.iter().position(|n| *n == ay.name).unwrap(),
    );
    let mut scenarios = Vec::new();
    for ((x, y), v) in g.points.iter().zip(&g.values) {
        let mut row = vec![float(*x), float(*y)];
        match v {
            Some(m) => {
                row.extend(m.iter().copied().map(float));
                let mut base = model.baseline();
                base[ix] = *x;
                base[iy] = *y;
                let (settings, _) = model.configure(&base)?;
                scenarios.push((format!("{}={};{}={}", ax.name, float(*x), ay.name, float(*y)), settings, metrics_from(m)?));
            }
            None => row.extend(std::iter::repeat(String::new()).take(g.metric_names.len())),
        }
        row.push(v.is_some().to_string());
        t.push(row);
    }
    let paths = vec![out(cfg, "sweep.csv"), out(cfg, "tea_lca.csv")];
    t.write(&paths[0])?;
    accounting_table(cfg, &scenarios)?.write(&paths[1])?;
    eprintln!("sweep: {} points, {} failed", g.values.len(), g.failures.len());
    check_rate(g.failures.len(), g.values.len(), cfg.run.max_failure_rate, g.failures.first().map(|f| f.1.as_str()))?;
    Ok(paths)
}

fn metrics_from(v: &[f64]) -> Result<Metrics, CliError> {
    let a: [f64; 7] = v
        .try_into()
        .map_err(|_| CliError::Config(format!("expected 7 metrics, got {}", v.len())))?;
    Ok(Metrics::from_array(a))
}
