//! Nonparametric significance tests and effect sizes for comparing extraction pipelines.
//!
//! * [`wilcoxon_signed_rank`] for paired pipeline comparisons (exact or normal approximation)
//! * [`friedman_test`] with Kendall's W as effect size
//! * [`average_ranks`] for model ranking across settings
//! * [`cohens_d`] with the pooled sample standard deviation

mod friedman;
pub mod special;
mod wilcoxon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use friedman::{average_ranks, friedman_test, RankMatrix};
pub use special::chi_square_sf;
pub use wilcoxon::{wilcoxon_signed_rank, PairedSample, WilcoxonMode};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero pooled variance")]
    ZeroVariance,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
    pub sample_size: usize,
}

/// p-values are reported to three decimals.
pub fn format_p(p: f64) -> String {
    format!("{p:.3}")
}

/// Midranks (1-based) of `values`, ties sharing the mean of their positions.
/// With `descending`, the largest value gets rank 1.
pub(crate) fn midranks(values: &[f64], descending: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups among `values` (groups of one included).
pub(crate) fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Cohen's d of `a` against `b`: positive when `a` has the larger mean.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let got = a.len().min(b.len());
    if got < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    if pooled.is_nan() || pooled <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}
