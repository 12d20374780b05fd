use serde::{Deserialize, Serialize};

use super::special::normal_sf;
use super::{midranks, tie_groups, StatsError, TestResult};

/// Largest zero-free sample for which `Auto` enumerates the exact null distribution.
pub const EXACT_AUTO_LIMIT: usize = 25;

/// Paired observations of two pipelines over the same labelled settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub labels: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedSample {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        if a.len() != b.len() || a.len() != labels.len() {
            return Err(StatsError::InvalidInput(format!(
                "paired sample lengths differ: labels {}, a {}, b {}",
                labels.len(),
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput("non-finite value in paired sample".into()));
        }
        Ok(PairedSample { labels, a, b })
    }

    /// Unlabelled convenience constructor; settings are numbered from 1.
    pub fn from_vectors(a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        let labels = (1..=a.len()).map(|i| i.to_string()).collect();
        Self::new(labels, a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMode {
    Exact,
    Approximate,
    /// Exact when at most [`EXACT_AUTO_LIMIT`] nonzero differences and no tied magnitudes.
    #[default]
    Auto,
}

/// Two-sided Wilcoxon signed-rank test of `a - b`. The statistic is min(W+, W-).
pub fn wilcoxon_signed_rank(sample: &PairedSample, mode: WilcoxonMode) -> Result<TestResult, StatsError> {
    let diffs: Vec<f64> = sample.a.iter().zip(&sample.b).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if sample.a.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&magnitudes, false);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let ties = tie_groups(&magnitudes);
    let has_ties = ties.iter().any(|&t| t > 1);

    let exact = match mode {
        WilcoxonMode::Exact => true,
        WilcoxonMode::Approximate => false,
        WilcoxonMode::Auto => n <= EXACT_AUTO_LIMIT && !has_ties,
    };
    let (p_value, method) =
        if exact { (exact_p(&ranks, w_plus), "wilcoxon-exact") } else { (approximate_p(n, &ties, w_plus), "wilcoxon-normal") };
    Ok(TestResult {
        statistic: w_plus.min(w_minus),
        p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
        method: method.to_string(),
        effect_size: None,
        sample_size: n,
    })
}

/// Exact two-sided p over all 2^n sign assignments, counted by dynamic programming over the
/// attainable rank sums. Ranks are doubled so midranks stay integral.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut dist = vec![0.0f64; max_sum + 1];
    dist[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max_sum).rev() {
            dist[s] = 0.5 * dist[s] + 0.5 * dist[s - r];
        }
        for s in dist.iter_mut().take(r) {
            *s *= 0.5;
        }
    }
    let observed = (w_plus * 2.0).round() as usize;
    let lower: f64 = dist[..=observed].iter().sum();
    let upper: f64 = dist[observed..].iter().sum();
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity correction.
fn approximate_p(n: usize, ties: &[usize], w_plus: f64) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t.pow(3) - t) as f64).sum::<f64>() / 48.0;
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    (2.0 * normal_sf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force two-sided p by listing every sign assignment.
    fn enumerate_p(ranks: &[f64], w_plus: f64) -> f64 {
        let n = ranks.len();
        let total = 1u64 << n;
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0..total {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s <= w_plus + 1e-9 {
                le += 1;
            }
            if s >= w_plus - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
    }

    fn sample(d: &[f64]) -> PairedSample {
        PairedSample::from_vectors(d.to_vec(), vec![0.0; d.len()]).unwrap()
    }

    #[test]
    fn uniform_sign_n8() {
        let r = wilcoxon_signed_rank(&sample(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]), WilcoxonMode::Exact).unwrap();
        assert_eq!(r.p_value, 0.0078125);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(super::super::format_p(r.p_value), "0.008");
    }

    #[test]
    fn symmetric_differences() {
        let r = wilcoxon_signed_rank(&sample(&[1.0, -1.0, 2.0, -2.0]), WilcoxonMode::Exact).unwrap();
        assert_eq!(r.statistic, 5.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zero_handling() {
        let s = PairedSample::from_vectors(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(wilcoxon_signed_rank(&s, WilcoxonMode::Auto), Err(StatsError::AllZeroDifferences));
        // Zeros are dropped before ranking.
        let with_zero = wilcoxon_signed_rank(&sample(&[0.0, 1.0, 2.0, 3.0]), WilcoxonMode::Exact).unwrap();
        assert_eq!(with_zero.sample_size, 3);
        assert_eq!(with_zero.p_value, 0.25);
    }

    #[test]
    fn auto_picks_method() {
        let no_ties = wilcoxon_signed_rank(&sample(&[1.0, 2.0, -3.0]), WilcoxonMode::Auto).unwrap();
        assert_eq!(no_ties.method, "wilcoxon-exact");
        let ties = wilcoxon_signed_rank(&sample(&[1.0, 1.0, -3.0]), WilcoxonMode::Auto).unwrap();
        assert_eq!(ties.method, "wilcoxon-normal");
    }

    #[test]
    fn dp_matches_enumeration_with_ties() {
        let cases: [&[f64]; 4] = [
            &[1.0, -2.0, 3.0, 3.0, -3.0, 4.5],
            &[0.5, 0.5, 0.5, -0.5, 2.0, 7.0, -1.0],
            &[1.0, 2.0, 3.0, 4.0, 5.0, -6.0, 7.0, 8.0, -9.0, 10.0, 11.0, 12.0],
            &[-1.0, -1.0, -2.0, -2.0, -2.0],
        ];
        for d in cases {
            let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
            let ranks = midranks(&mags, false);
            let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
            let r = wilcoxon_signed_rank(&sample(d), WilcoxonMode::Exact).unwrap();
            assert!((r.p_value - enumerate_p(&ranks, w_plus)).abs() < 1e-12, "{d:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn swap_and_scale_invariance(
                d in proptest::collection::vec(-10.0f64..10.0, 1..14),
                scale in 0.01f64..100.0,
            ) {
                prop_assume!(d.iter().any(|x| *x != 0.0));
                let zeros = vec![0.0; d.len()];
                let fwd = PairedSample::from_vectors(d.clone(), zeros.clone()).unwrap();
                let rev = PairedSample::from_vectors(zeros.clone(), d.clone()).unwrap();
                let scaled = PairedSample::from_vectors(d.iter().map(|x| x * scale).collect(), zeros).unwrap();
                let p = wilcoxon_signed_rank(&fwd, WilcoxonMode::Exact).unwrap().p_value;
                prop_assert!((p - wilcoxon_signed_rank(&rev, WilcoxonMode::Exact).unwrap().p_value).abs() < 1e-12);
                prop_assert!((p - wilcoxon_signed_rank(&scaled, WilcoxonMode::Exact).unwrap().p_value).abs() < 1e-12);
            }
        }
    }
}
