//! Rank tests and descriptive statistics shared by the bias analyses.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Significance level used throughout: two-sided, uncorrected.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest combined sample size for which p-values are enumerated exactly.
pub const EXACT_CUTOFF: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    NormalApprox,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub u_a: f64,
    pub u_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub p_value: f64,
    pub method: PMethod,
}

impl UTestResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Midranks (1-based, ties averaged) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Sum of t³ − t over tie groups.
fn tie_term(sorted: &[f64]) -> f64 {
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum()
}

/// Mann-Whitney U test. `u_a` counts pairs where the `a` value is larger,
/// with ties contributing one half.
pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64], _alternative: Alternative) -> Result<UTestResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Argument("Mann-Whitney U needs two non-empty samples".into()));
    }
    if sample_a.iter().chain(sample_b).any(|v| v.is_nan()) {
        return Err(Error::Argument("Mann-Whitney U samples contain NaN".into()));
    }
    let (n_a, n_b) = (sample_a.len(), sample_b.len());
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    let u_a = rank_sum_a - offset;
    let total = (n_a * n_b) as f64;
    let u_b = total - u_a;
    let mean = total / 2.0;

    let (p_value, method) = if n_a + n_b <= EXACT_CUTOFF {
        // Fraction of all size-n_a subsets of the pooled ranks that are at
        // least as far from the mean as the observed split.
        let observed = (u_a - mean).abs() - 1e-9;
        let mut extreme = 0u64;
        let mut count = 0u64;
        for subset in ranks.iter().combinations(n_a) {
            let u = subset.into_iter().sum::<f64>() - offset;
            if (u - mean).abs() >= observed {
                extreme += 1;
            }
            count += 1;
        }
        (extreme as f64 / count as f64, PMethod::Exact)
    } else {
        (normal_p(u_a, n_a, n_b, pooled), PMethod::NormalApprox)
    };

    Ok(UTestResult {
        u_a,
        u_b,
        n_a,
        n_b,
        p_value: p_value.min(1.0),
        method,
    })
}

fn normal_p(u_a: f64, n_a: usize, n_b: usize, mut pooled: Vec<f64>) -> f64 {
    let n = (n_a + n_b) as f64;
    let total = (n_a * n_b) as f64;
    pooled.sort_by(f64::total_cmp);
    let variance = total / 12.0 * ((n + 1.0) - tie_term(&pooled) / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u_a - total / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Normal-approximation p-value regardless of sample size.
pub fn mann_whitney_normal_p(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    let r = mann_whitney_u(sample_a, sample_b, Alternative::TwoSided)?;
    let pooled = sample_a.iter().chain(sample_b).copied().collect();
    Ok(normal_p(r.u_a, r.n_a, r.n_b, pooled))
}

fn require_nonempty(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        Err(Error::Argument(format!("{what} of an empty list")))
    } else {
        Ok(())
    }
}

pub fn mean(values: &[f64]) -> Result<f64> {
    require_nonempty(values, "mean")?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean squared deviation from the mean (divisor = count).
pub fn population_variance(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    let n = values.len() as f64;
    // Corrected two-pass sum keeps the result stable under large shifts.
    let (sq, lin) = values.iter().fold((0.0, 0.0), |(sq, lin), v| {
        let d = v - m;
        (sq + d * d, lin + d)
    });
    Ok(((sq - lin * lin / n) / n).max(0.0))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Quantile by linear interpolation between closest ranks.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    require_nonempty(values, "quantile")?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    require_nonempty(values, "summary")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: sorted.len(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force: count pairs directly, then enumerate every way of
    /// splitting the pooled values into groups of the original sizes.
    fn oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
        let pair_u = |xs: &[f64], ys: &[f64]| -> f64 {
            let mut u = 0.0;
            for x in xs {
                for y in ys {
                    if x > y {
                        u += 1.0;
                    } else if x == y {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let observed = pair_u(a, b);
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let mean = (a.len() * b.len()) as f64 / 2.0;
        let (mut hit, mut all) = (0u32, 0u32);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (i, v) in pooled.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        xs.push(*v);
                    } else {
                        ys.push(*v);
                    }
                }
                (xs, ys)
            };
            all += 1;
            if (pair_u(&xs, &ys) - mean).abs() >= (observed - mean).abs() - 1e-9 {
                hit += 1;
            }
        }
        (observed, hit as f64 / all as f64)
    }

    #[test]
    fn complete_separation() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], Alternative::TwoSided).unwrap();
        assert_eq!((r.u_a, r.u_b), (0.0, 4.0));
        assert_eq!(r.method, PMethod::Exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_split_ties() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], Alternative::TwoSided).unwrap();
        assert_eq!((r.u_a, r.u_b), (4.5, 4.5));
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            mann_whitney_u(&[], &[1.0], Alternative::TwoSided),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            mann_whitney_u(&[1.0], &[], Alternative::TwoSided),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
        assert_eq!(r.method, PMethod::NormalApprox);
        assert_eq!(r.u_a + r.u_b, 400.0);
        assert!(r.p_value < 0.01);
        let r = mann_whitney_u(&[5.0; 10], &[5.0; 10], Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn variance_examples() {
        assert!((population_variance(&[0.8, 0.6]).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(population_variance(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert_eq!(population_variance(&[0.0, 1.0]).unwrap(), 0.25);
        assert!(population_variance(&[]).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[5.0]).unwrap(), 5.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn summary_of_constant_values() {
        let s = summarize(&[2.5; 7]).unwrap();
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max, s.count),
            (2.5, 2.5, 2.5, 2.5, 2.5, 7)
        );
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    fn small_sample() -> impl Strategy<Value = Vec<f64>> {
        // Few distinct values so ties are common.
        prop::collection::vec((0i32..6).prop_map(f64::from), 1..=8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exact_p_matches_enumeration_oracle(a in small_sample(), b in small_sample()) {
            let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let (u, p) = oracle(&a, &b);
            prop_assert_eq!(r.u_a, u);
            prop_assert!((r.p_value - p).abs() < 1e-12, "{} vs {}", r.p_value, p);
        }
    }

    proptest! {

        #[test]
        fn u_bounds_and_sum(a in prop::collection::vec(-50.0f64..50.0, 1..30),
                            b in prop::collection::vec(-50.0f64..50.0, 1..30)) {
            let r = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let total = (a.len() * b.len()) as f64;
            prop_assert!((r.u_a + r.u_b - total).abs() < 1e-9);
            prop_assert!(r.u_a >= 0.0 && r.u_a <= total);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }

        #[test]
        fn swapping_samples_swaps_u(a in prop::collection::vec(-50.0f64..50.0, 1..25),
                                    b in prop::collection::vec(-50.0f64..50.0, 1..25)) {
            let ab = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap();
            let ba = mann_whitney_u(&b, &a, Alternative::TwoSided).unwrap();
            prop_assert!((ab.u_a - ba.u_b).abs() < 1e-9);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }

        #[test]
        fn shift_leaves_test_unchanged(a in prop::collection::vec(-50i32..50, 1..25),
                                       b in prop::collection::vec(-50i32..50, 1..25),
                                       c in -1000i32..1000) {
            let f = |xs: &[i32], k: i32| xs.iter().map(|&x| f64::from(x + k)).collect::<Vec<_>>();
            let base = mann_whitney_u(&f(&a, 0), &f(&b, 0), Alternative::TwoSided).unwrap();
            let moved = mann_whitney_u(&f(&a, c), &f(&b, c), Alternative::TwoSided).unwrap();
            prop_assert_eq!(base, moved);
        }

        #[test]
        fn normal_approx_tracks_exact_on_moderate_balanced_sizes(
            values in prop::collection::hash_set(-1000i32..1000, 11..=12),
            n_a in 4usize..=6,
        ) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            prop_assume!(values.len() - n_a >= 4);
            let (a, b) = values.split_at(n_a);
            let exact = mann_whitney_u(a, b, Alternative::TwoSided).unwrap();
            prop_assert_eq!(exact.method, PMethod::Exact);
            let approx = mann_whitney_normal_p(a, b).unwrap();
            prop_assert!((approx - exact.p_value).abs() <= 0.02, "{} vs {}", approx, exact.p_value);
        }

        #[test]
        fn variance_is_shift_invariant(xs in prop::collection::vec(-10.0f64..10.0, 1..50), c in -1e3f64..1e3) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let d = population_variance(&xs).unwrap() - population_variance(&shifted).unwrap();
            prop_assert!(d.abs() < 1e-12, "{}", d);
        }
    }
}
