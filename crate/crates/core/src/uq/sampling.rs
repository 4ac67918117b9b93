use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distributions::{validate_specs, DistributionSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Random,
    Lhs,
}

/// `rows × names.len()` matrix of parameter values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
    pub method: SamplingMethod,
}

impl SampleMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_of(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.column(j))
    }
}

fn check(specs: &[DistributionSpec], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    if specs.is_empty() {
        return Err(Error::Empty("distribution specs"));
    }
    validate_specs(specs)
}

/// Builds the matrix column by column from one seeded stream, so the result
/// depends only on `(specs, n, seed)`.
fn build(
    specs: &[DistributionSpec],
    n: usize,
    seed: u64,
    method: SamplingMethod,
    mut column: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![Vec::with_capacity(specs.len()); n];
    for spec in specs {
        for (row, u) in rows.iter_mut().zip(column(&mut rng)) {
            row.push(spec.quantile(u));
        }
    }
    SampleMatrix {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        rows,
        seed,
        method,
    }
}

/// Independent inverse-CDF draws.
pub fn sample_random(specs: &[DistributionSpec], n: usize, seed: u64) -> Result<SampleMatrix> {
    check(specs, n)?;
    Ok(build(specs, n, seed, SamplingMethod::Random, |rng| {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }))
}

/// Latin hypercube: one draw per equal-probability stratum, strata shuffled
/// independently per parameter.
pub fn sample_lhs(specs: &[DistributionSpec], n: usize, seed: u64) -> Result<SampleMatrix> {
    check(specs, n)?;
    Ok(build(specs, n, seed, SamplingMethod::Lhs, |rng| {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        strata
            .into_iter()
            .map(|k| (k as f64 + rng.gen::<f64>()) / n as f64)
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> DistributionSpec {
        DistributionSpec::uniform("u", 0.0, 1.0, 0.5)
    }

    #[test]
    fn random_range_and_determinism() {
        let a = sample_random(&[unit()], 500, 7).unwrap();
        assert!(a.column(0).iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, sample_random(&[unit()], 500, 7).unwrap());
        assert_ne!(a.rows, sample_random(&[unit()], 500, 8).unwrap().rows);
    }

    #[test]
    fn triangular_mean_within_three_standard_errors() {
        let t = DistributionSpec::triangular("t", 0.0, 0.0, 1.0, 0.0);
        let n = 20_000;
        let x = sample_random(&[t], n, 11).unwrap().column(0);
        let mean = x.iter().sum::<f64>() / n as f64;
        // variance of triangular(0, 0, 1) is 1/18
        let se = (1.0f64 / 18.0 / n as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn lhs_four_strata() {
        let x = sample_lhs(&[unit()], 4, 3).unwrap().column(0);
        let mut bins = [0; 4];
        for v in x {
            bins[((v * 4.0) as usize).min(3)] += 1;
        }
        assert_eq!(bins, [1; 4]);
    }

    #[test]
    fn lhs_single_draw() {
        let m = sample_lhs(&[unit()], 1, 3).unwrap();
        assert_eq!(m.len(), 1);
        assert!((0.0..=1.0).contains(&m.rows[0][0]));
    }

    #[test]
    fn lhs_ecdf_close_to_cdf_at_stratum_boundaries() {
        let n = 1000;
        let mut x = sample_lhs(&[unit()], n, 5).unwrap().column(0);
        x.sort_by(f64::total_cmp);
        for k in 1..n {
            let b = k as f64 / n as f64;
            let ecdf = x.iter().filter(|&&v| v <= b).count() as f64 / n as f64;
            assert!((ecdf - b).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(sample_lhs(&[unit()], 0, 1).is_err());
        assert!(sample_random(&[], 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn lhs_one_sample_per_stratum(n in 1usize..200, seed in any::<u64>(), lo in -5.0f64..5.0, w in 0.5f64..5.0, m in 0.0f64..1.0) {
            let specs = [
                DistributionSpec::uniform("a", lo, lo + w, lo),
                DistributionSpec::triangular("b", lo, lo + m * w, lo + w, lo),
            ];
            let s = sample_lhs(&specs, n, seed).unwrap();
            for (j, spec) in specs.iter().enumerate() {
                let mut bins = vec![0; n];
                for v in s.column(j) {
                    prop_assert!(v >= spec.min && v <= spec.max);
                    let k = ((spec.cdf(v) * n as f64).floor() as usize).min(n - 1);
                    bins[k] += 1;
                }
                prop_assert!(bins.iter().all(|&b| b == 1));
            }
        }

        #[test]
        fn seed_fixes_matrix(n in 1usize..50, seed in any::<u64>()) {
            let specs = [DistributionSpec::triangular("b", 0.0, 0.3, 1.0, 0.3), unit()];
            let a = sample_lhs(&specs, n, seed).unwrap();
            let b = sample_lhs(&specs, n, seed).unwrap();
            prop_assert_eq!(a.rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
