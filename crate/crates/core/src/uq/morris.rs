use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{evaluate_all, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorrisOptions {
    pub n_trajectory: usize,
    /// Grid levels p, even.
    pub levels: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub workers: Option<usize>,
}

impl Default for MorrisOptions {
    fn default() -> Self {
        Self {
            n_trajectory: 50,
            levels: 4,
            seed: 0,
            bootstrap: 1000,
            workers: None,
        }
    }
}

/// One-at-a-time trajectories in the unit hypercube.
#[derive(Debug, Clone, PartialEq)]
pub struct MorrisDesign {
    pub delta: f64,
    /// `n_trajectory × (k + 1)` points, trajectory-major.
    pub points: Vec<Vec<f64>>,
    /// Parameter moved at each step of each trajectory.
    pub order: Vec<Vec<usize>>,
    /// Direction (+1 or −1) of each parameter's move, per trajectory.
    pub sign: Vec<Vec<f64>>,
}

/// Simulations needed for `r` trajectories over `k` parameters.
pub fn n_morris(r: usize, k: usize) -> usize {
    r * (k + 1)
}

pub fn morris_design(k: usize, n_trajectory: usize, levels: usize, seed: u64) -> Result<MorrisDesign> {
    if k == 0 {
        return Err(Error::Empty("Morris parameters"));
    }
    if n_trajectory < 2 {
        return Err(Error::InvalidParameter(format!("n_trajectory {n_trajectory} must be >= 2")));
    }
    if levels < 2 || levels % 2 != 0 {
        return Err(Error::InvalidParameter(format!("Morris levels {levels} must be even and >= 2")));
    }
    let step = 1.0 / (levels - 1) as f64;
    let delta = levels as f64 / (2.0 * (levels - 1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_morris(n_trajectory, k));
    let mut orders = Vec::with_capacity(n_trajectory);
    let mut signs = Vec::with_capacity(n_trajectory);
    for _ in 0..n_trajectory {
        // lower end of each move, chosen so that the upper end stays on the grid
        let base: Vec<f64> = (0..k).map(|_| rng.gen_range(0..levels / 2) as f64 * step).collect();
        let sign: Vec<f64> = (0..k).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut x: Vec<f64> = base.iter().zip(&sign).map(|(b, s)| if *s > 0.0 { *b } else { b + delta }).collect();
        points.push(x.clone());
        for &i in &order {
            x[i] = if sign[i] > 0.0 { base[i] + delta } else { base[i] };
            points.push(x.clone());
        }
        orders.push(order);
        signs.push(sign);
    }
    Ok(MorrisDesign {
        delta,
        points,
        order: orders,
        sign: signs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MorrisLabel {
    Inactive,
    NearLinear,
    Monotonic,
    NonMonotonic,
}

impl MorrisLabel {
    /// Classifies by σ/μ*: above 1 non-monotonic, below 0.1 near-linear.
    pub fn classify(mu_star: f64, sigma: f64) -> Self {
        if !(mu_star > 0.0) {
            return MorrisLabel::Inactive;
        }
        let ratio = sigma / mu_star;
        if ratio > 1.0 {
            MorrisLabel::NonMonotonic
        } else if ratio < 0.1 {
            MorrisLabel::NearLinear
        } else {
            MorrisLabel::Monotonic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorrisEntry {
    pub parameter: String,
    pub metric: String,
    pub mu: f64,
    pub mu_star: f64,
    pub sigma: f64,
    pub mu_star_norm: f64,
    pub sigma_norm: f64,
    pub ci95: f64,
    pub label: MorrisLabel,
}

#[derive(Debug, Clone)]
pub struct MorrisResult {
    /// Parameter-major, metric-minor.
    pub entries: Vec<MorrisEntry>,
    pub n_simulations: usize,
    pub failed: usize,
}

impl MorrisResult {
    pub fn get(&self, parameter: &str, metric: &str) -> Option<&MorrisEntry> {
        self.entries.iter().find(|e| e.parameter == parameter && e.metric == metric)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Elementary effects in unit-hypercube coordinates; the design points are
/// mapped through each parameter's inverse CDF before evaluation.
pub fn morris<M: Model + ?Sized>(model: &M, opts: &MorrisOptions) -> Result<MorrisResult> {
    let specs = model.parameters();
    let k = specs.len();
    let design = morris_design(k, opts.n_trajectory, opts.levels, opts.seed)?;
    let physical: Vec<Vec<f64>> = design
        .points
        .iter()
        .map(|u| u.iter().zip(specs).map(|(&u, s)| s.quantile(u)).collect())
        .collect();
    let outputs = evaluate_all(model, &physical, opts.workers);
    let failed = outputs.iter().filter(|r| r.is_err()).count();
    let metric_names = model.metric_names();
    let m = metric_names.len();

    // ee[i][metric] over trajectories where both ends succeeded
    let mut ee = vec![vec![Vec::with_capacity(opts.n_trajectory); m]; k];
    for (t, order) in design.order.iter().enumerate() {
        let first = t * (k + 1);
        for (s, &i) in order.iter().enumerate() {
            let (Ok(a), Ok(b)) = (&outputs[first + s], &outputs[first + s + 1]) else {
                continue;
            };
            let dx = design.sign[t][i] * design.delta;
            for j in 0..m {
                ee[i][j].push((b[j] - a[j]) / dx);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d6f_7272_6973);
    let mut stats = vec![vec![(0.0, 0.0, 0.0, 0.0); m]; k];
    for i in 0..k {
        let n = ee[i].first().map_or(0, Vec::len);
        let resamples: Vec<Vec<usize>> = (0..opts.bootstrap)
            .map(|_| (0..n).map(|_| rng.gen_range(0..n.max(1))).collect())
            .collect();
        for j in 0..m {
            let e = &ee[i][j];
            if e.is_empty() {
                stats[i][j] = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
                continue;
            }
            let abs: Vec<f64> = e.iter().map(|v| v.abs()).collect();
            let boot: Vec<f64> = resamples.iter().map(|idx| idx.iter().map(|&r| abs[r]).sum::<f64>() / n as f64).collect();
            let ci = if boot.len() >= 2 { 1.96 * sample_std(&boot) } else { f64::NAN };
            stats[i][j] = (mean(e), mean(&abs), sample_std(e), ci);
        }
    }

    let mut entries = Vec::with_capacity(k * m);
    let max_mu_star: Vec<f64> = (0..m)
        .map(|j| (0..k).map(|i| stats[i][j].1).filter(|v| v.is_finite()).fold(0.0, f64::max))
        .collect();
    for (i, spec) in specs.iter().enumerate() {
        for j in 0..m {
            let (mu, mu_star, sigma, ci95) = stats[i][j];
            let norm = |v: f64| if max_mu_star[j] > 0.0 { v / max_mu_star[j] } else { 0.0 };
            entries.push(MorrisEntry {
                parameter: spec.name.clone(),
                metric: metric_names[j].clone(),
                mu,
                mu_star,
                sigma,
                mu_star_norm: norm(mu_star),
                sigma_norm: norm(sigma),
                ci95,
                label: MorrisLabel::classify(mu_star, sigma),
            });
        }
    }
    Ok(MorrisResult {
        entries,
        n_simulations: design.points.len(),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::DistributionSpec;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Linear {
        specs: Vec<DistributionSpec>,
        calls: AtomicUsize,
    }

    impl Linear {
        fn new(k: usize) -> Self {
            Self {
                specs: (0..k).map(|i| DistributionSpec::uniform(&format!("x{i}"), 0.0, 1.0, 0.5)).collect(),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Model for Linear {
        fn parameters(&self) -> &[DistributionSpec] {
            &self.specs
        }
        fn metric_names(&self) -> Vec<String> {
            vec!["y".into(), "q".into()]
        }
        fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(vec![x[0], (x[1] - 0.5).powi(2)])
        }
    }

    #[test]
    fn linear_model_effects() {
        let model = Linear::new(4);
        let r = morris(&model, &MorrisOptions { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(r.n_simulations, 50 * 5);
        assert_eq!(model.calls.load(Ordering::Relaxed), 250);
        let e = r.get("x0", "y").unwrap();
        assert_eq!(e.mu_star_norm, 1.0);
        assert!((e.mu_star - 1.0).abs() < 1e-12);
        assert!(e.sigma <= 1e-10);
        assert_eq!(e.label, MorrisLabel::NearLinear);
        for p in ["x1", "x2", "x3"] {
            let e = r.get(p, "y").unwrap();
            assert_eq!((e.mu_star, e.sigma, e.label), (0.0, 0.0, MorrisLabel::Inactive));
        }
        // a symmetric quadratic has effects of both signs
        let q = r.get("x1", "q").unwrap();
        assert!(q.mu_star > q.mu.abs());
        assert!(q.ci95 >= 0.0);
    }

    #[test]
    fn simulation_count_matches_formula() {
        assert_eq!(n_morris(50, 137), 6900);
        assert_eq!(n_morris(50, 28), 1450);
        assert_eq!(morris_design(137, 50, 4, 1).unwrap().points.len(), 6900);
    }

    #[test]
    fn invalid_designs() {
        assert!(morris_design(0, 10, 4, 0).is_err());
        assert!(morris_design(3, 1, 4, 0).is_err());
        assert!(morris_design(3, 10, 3, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let model = Linear::new(3);
        let o = MorrisOptions {
            n_trajectory: 8,
            seed: 9,
            ..Default::default()
        };
        let a = morris(&model, &o).unwrap();
        let b = morris(&model, &MorrisOptions { workers: Some(3), ..o }).unwrap();
        assert_eq!(a.entries, b.entries);
    }

    proptest! {
        #[test]
        fn design_moves_each_parameter_once_by_delta(k in 1usize..12, r in 2usize..8, half in 1usize..4, seed in any::<u64>()) {
            let p = 2 * half;
            let d = morris_design(k, r, p, seed).unwrap();
            prop_assert_eq!(d.points.len(), n_morris(r, k));
            for t in 0..r {
                let mut moved = vec![false; k];
                for s in 0..k {
                    let a = &d.points[t * (k + 1) + s];
                    let b = &d.points[t * (k + 1) + s + 1];
                    let changed: Vec<usize> = (0..k).filter(|&i| a[i] != b[i]).collect();
                    prop_assert_eq!(changed.len(), 1);
                    let i = changed[0];
                    prop_assert!(!moved[i]);
                    moved[i] = true;
                    prop_assert!(((b[i] - a[i]) - d.sign[t][i] * d.delta).abs() < 1e-12);
                    prop_assert!(b.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
                }
            }
        }

        #[test]
        fn mu_star_bounds_mean(seed in any::<u64>()) {
            let model = Linear::new(2);
            let r = morris(&model, &MorrisOptions { n_trajectory: 6, seed, bootstrap: 20, ..Default::default() }).unwrap();
            for e in &r.entries {
                prop_assert!(e.mu_star >= 0.0);
                prop_assert!(e.mu_star + 1e-12 >= e.mu.abs());
                prop_assert!(e.mu_star_norm <= 1.0);
            }
        }
    }
}
