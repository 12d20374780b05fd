use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use super::{midranks, tie_groups, StatsError, TestResult};

/// `n` subjects (rows, e.g. evaluation settings) by `k` treatments (columns, e.g. OCR
/// conditions or models). Higher values are better; the best treatment in a row gets rank 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub subjects: Vec<String>,
    pub treatments: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn new(subjects: Vec<String>, treatments: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let (n, k) = (subjects.len(), treatments.len());
        if n < 2 || k < 2 {
            return Err(StatsError::InvalidInput(format!("rank matrix needs n >= 2 and k >= 2, got {n}x{k}")));
        }
        if values.len() != n || values.iter().any(|row| row.len() != k) {
            return Err(StatsError::InvalidInput("rank matrix is not rectangular".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput("non-finite cell in rank matrix".into()));
        }
        Ok(RankMatrix { subjects, treatments, values })
    }

    /// Unlabelled convenience constructor.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let k = values.first().map_or(0, Vec::len);
        let subjects = (1..=values.len()).map(|i| format!("s{i}")).collect();
        let treatments = (1..=k).map(|j| format!("t{j}")).collect();
        Self::new(subjects, treatments, values)
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn k(&self) -> usize {
        self.treatments.len()
    }

    fn row_ranks(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|row| midranks(row, true)).collect()
    }
}

/// Mean per-row rank of every treatment; lower is better.
pub fn average_ranks(m: &RankMatrix) -> Vec<f64> {
    let ranks = m.row_ranks();
    (0..m.k()).map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / m.n() as f64).collect()
}

/// Friedman test with tie correction; `effect_size` carries Kendall's W = χ² / (n(k−1)).
pub fn friedman_test(m: &RankMatrix) -> Result<TestResult, StatsError> {
    let (n, k) = (m.n() as f64, m.k() as f64);
    let ranks = m.row_ranks();
    let rank_sums: Vec<f64> = (0..m.k()).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let tie_total: f64 = m.values.iter().flat_map(|row| tie_groups(row)).map(|t| (t.pow(3) - t) as f64).sum();
    let correction = 1.0 - tie_total / (n * (k.powi(3) - k));
    let statistic = if correction <= f64::EPSILON {
        0.0
    } else {
        ((12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0)) / correction).max(0.0)
    };
    let w = (statistic / (n * (k - 1.0))).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic,
        p_value: chi_square_sf(statistic, (m.k() - 1) as u32).clamp(f64::MIN_POSITIVE, 1.0),
        method: "friedman".to_string(),
        effect_size: Some(w),
        sample_size: m.n(),
    })
}
