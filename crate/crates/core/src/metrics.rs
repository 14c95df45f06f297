//! Binary-classification metrics over confusion counts and ranking scores.
//! The positive class is "accept" (label 1) throughout.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no samples to score")]
    Empty,
    #[error("AUC needs at least one positive and one negative sample")]
    SingleClass,
}

/// Confusion counts with accept (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted: u8, actual: u8) {
        match (predicted, actual) {
            (1, 1) => self.true_positive += 1,
            (1, 0) => self.false_positive += 1,
            (0, 1) => self.false_negative += 1,
            _ => self.true_negative += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// Fraction of correctly predicted samples.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok((c.true_positive + c.true_negative) as f64 / total as f64)
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.true_positive + c.false_positive;
    if denom == 0 {
        0.0
    } else {
        c.true_positive as f64 / denom as f64
    }
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.true_positive + c.false_negative;
    if denom == 0 {
        0.0
    } else {
        c.true_positive as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall; degenerate cases return 0.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let p = precision(c);
    let r = recall(c);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Matthews correlation coefficient; a zero factor in the denominator gives 0
/// by convention.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let tp = c.true_positive as f64;
    let fp = c.false_positive as f64;
    let fn_ = c.false_negative as f64;
    let tn = c.true_negative as f64;
    let denom_sq = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom_sq == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom_sq.sqrt()
    }
}

/// Area under the ROC curve by the rank (Mann-Whitney) formulation: the
/// fraction of positive-negative pairs where the positive scores higher,
/// ties counted as one half.
pub fn auc(scored: &[(f64, u8)]) -> Result<f64, MetricsError> {
    let positives = scored.iter().filter(|(_, l)| *l == 1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).expect("finite scores"));
    // Average ranks over tie groups, 1-based.
    let mut rank_sum_positive = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let average_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 == 1 {
                rank_sum_positive += average_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let u = rank_sum_positive - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}
