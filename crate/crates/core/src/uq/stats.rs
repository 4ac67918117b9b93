use serde::Serialize;

use super::sampling::SampleMatrix;
use crate::error::{Error, Result};

/// Two-sample Kolmogorov–Smirnov statistic sup |F_a − F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.0 {
        // the alternating series converges slowly here; use the Jacobi form of the CDF
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut s = 0.0;
        for k in 0..100 {
            let e = ((2 * k + 1) as f64).powi(2);
            let term = q.powf(e);
            s += term;
            if term <= 1e-10 * s {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term <= 1e-10 * s.abs() {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// KS statistic and asymptotic p value with effective size n₁n₂/(n₁+n₂).
pub fn ks_2samp(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = na * nb / (na + nb);
    (d, kolmogorov_sf(en.sqrt() * d))
}

/// Groups smaller than this are reported but flagged as low confidence.
pub const MIN_GROUP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterEntry {
    pub parameter: String,
    pub metric: String,
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub n_above: usize,
    pub n_below: usize,
    pub low_confidence: bool,
}

/// Splits the samples at `threshold` on `values` (equality goes below) and
/// compares each parameter's two conditional distributions. Samples whose
/// metric is missing are left out.
pub fn mc_filter(samples: &SampleMatrix, metric: &str, values: &[Option<f64>], threshold: f64) -> Result<Vec<FilterEntry>> {
    if values.len() != samples.len() {
        return Err(Error::Dimension {
            expected: samples.len(),
            got: values.len(),
        });
    }
    let above: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some_and(|v| v > threshold)).collect();
    let below: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some_and(|v| v <= threshold)).collect();
    if above.is_empty() || below.is_empty() {
        return Err(Error::Statistics(format!(
            "threshold {threshold} on `{metric}` leaves {} sample(s) above and {} below",
            above.len(),
            below.len()
        )));
    }
    Ok(samples
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let a: Vec<f64> = above.iter().map(|&i| samples.rows[i][j]).collect();
            let b: Vec<f64> = below.iter().map(|&i| samples.rows[i][j]).collect();
            let (d, p) = ks_2samp(&a, &b);
            FilterEntry {
                parameter: name.clone(),
                metric: metric.to_string(),
                d,
                p,
                n_above: a.len(),
                n_below: b.len(),
                low_confidence: a.len() < MIN_GROUP || b.len() < MIN_GROUP,
            }
        })
        .collect())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman_pair(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpearmanResult {
    pub parameters: Vec<String>,
    pub metrics: Vec<String>,
    /// `rho[parameter][metric]`; 0 where `constant` is set.
    pub rho: Vec<Vec<f64>>,
    pub constant: Vec<Vec<bool>>,
}

/// Parameter × metric rank correlations over the samples whose metrics exist.
pub fn spearman(samples: &SampleMatrix, metric_names: &[String], rows: &[Option<Vec<f64>>]) -> Result<SpearmanResult> {
    if rows.len() != samples.len() {
        return Err(Error::Dimension {
            expected: samples.len(),
            got: rows.len(),
        });
    }
    let keep: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].is_some()).collect();
    if keep.len() < 3 {
        return Err(Error::Statistics(format!("Spearman needs at least 3 samples, got {}", keep.len())));
    }
    let mut rho = Vec::new();
    let mut constant = Vec::new();
    for j in 0..samples.names.len() {
        let x: Vec<f64> = keep.iter().map(|&i| samples.rows[i][j]).collect();
        let (mut r_row, mut c_row) = (Vec::new(), Vec::new());
        for m in 0..metric_names.len() {
            let y: Vec<f64> = keep.iter().map(|&i| rows[i].as_ref().expect("kept")[m]).collect();
            let r = spearman_pair(&x, &y);
            r_row.push(r.unwrap_or(0.0));
            c_row.push(r.is_none());
        }
        rho.push(r_row);
        constant.push(c_row);
    }
    Ok(SpearmanResult {
        parameters: samples.names.clone(),
        metrics: metric_names.to_vec(),
        rho,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::SamplingMethod;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brute_force_d(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_2samp(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), (0.0, 1.0));
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0, 5.0]), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]), 0.5);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > λ) at the classic 5% and 1% critical values
        assert_relative_eq!(kolmogorov_sf(1.358099), 0.05, max_relative = 1e-4);
        assert_relative_eq!(kolmogorov_sf(1.627624), 0.01, max_relative = 1e-4);
        // both series agree where they meet
        let below = kolmogorov_sf(1.0 - 1e-12);
        let above = kolmogorov_sf(1.0);
        assert_relative_eq!(below, above, max_relative = 1e-9);
        assert_relative_eq!(above, 0.26999967, max_relative = 1e-6);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.2) > 0.999_999);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_relative_eq!(spearman_pair(&x, &[2.0, 4.0, 9.0, 10.0, 30.0]).unwrap(), 1.0);
        assert_relative_eq!(spearman_pair(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        // without ties ρ = 1 − 6Σd²/(n(n² − 1)); here Σd² = 4
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let closed = 1.0 - 6.0 * d2 / (5.0 * 24.0);
        assert_relative_eq!(spearman_pair(&x, &y).unwrap(), closed, max_relative = 1e-12);
        assert_relative_eq!(closed, 0.8);
        assert_eq!(spearman_pair(&x, &[1.0; 5]), None);
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    fn matrix(cols: &[Vec<f64>]) -> SampleMatrix {
        SampleMatrix {
            names: (0..cols.len()).map(|j| format!("x{j}")).collect(),
            rows: (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
            seed: 0,
            method: SamplingMethod::Random,
        }
    }

    #[test]
    fn spearman_matrix_flags_constant_columns() {
        let s = matrix(&[vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 1.0, 1.0, 1.0]]);
        let rows: Vec<Option<Vec<f64>>> = [1.0, 4.0, 9.0, 16.0].iter().map(|v| Some(vec![*v])).collect();
        let r = spearman(&s, &["y".into()], &rows).unwrap();
        assert_relative_eq!(r.rho[0][0], 1.0);
        assert_eq!((r.rho[1][0], r.constant[1][0]), (0.0, true));
        assert!(spearman(&s, &["y".into()], &[None, None, Some(vec![1.0]), Some(vec![2.0])]).is_err());
    }

    #[test]
    fn filter_groups_and_flags() {
        let s = matrix(&[(0..20).map(f64::from).collect()]);
        let metric: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64)).collect();
        // equality belongs to the below group
        let r = mc_filter(&s, "y", &metric, 10.0).unwrap();
        assert_eq!((r[0].n_above, r[0].n_below), (9, 11));
        assert_eq!(r[0].d, 1.0);
        assert!(!r[0].low_confidence);
        let r = mc_filter(&s, "y", &metric, 16.0).unwrap();
        assert!(r[0].low_confidence);
        assert!(mc_filter(&s, "y", &metric, 100.0).is_err());
        let mut missing = metric.clone();
        missing[19] = None;
        let r = mc_filter(&s, "y", &missing, 10.0).unwrap();
        assert_eq!(r[0].n_above + r[0].n_below, 19);
    }

    proptest! {
        #[test]
        fn ks_matches_brute_force(a in prop::collection::vec(-20i32..20, 1..100), b in prop::collection::vec(-20i32..20, 1..100)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let (d, p) = ks_2samp(&a, &b);
            prop_assert!((d - brute_force_d(&a, &b)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&p));
        }

        #[test]
        fn rank_statistics_invariant_under_monotone_maps(a in prop::collection::vec(0.0f64..10.0, 3..60), b in prop::collection::vec(0.0f64..10.0, 3..60)) {
            let f = |v: &f64| (v * 0.7).exp() + 3.0 * v;
            let (fa, fb): (Vec<f64>, Vec<f64>) = (a.iter().map(f).collect(), b.iter().map(f).collect());
            prop_assert_eq!(ks_statistic(&a, &b), ks_statistic(&fa, &fb));
            let n = a.len().min(b.len());
            prop_assert_eq!(spearman_pair(&a[..n], &b[..n]), spearman_pair(&fa[..n], &b[..n]));
        }

        #[test]
        fn spearman_bounded(x in prop::collection::vec(-5.0f64..5.0, 3..50), seed in any::<u64>()) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * ((seed >> (i % 64)) & 1) as f64 - i as f64 * 0.1).collect();
            if let Some(r) = spearman_pair(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
