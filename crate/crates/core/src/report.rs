//! Corpus-level simplification statistics: tree sizes before and after
//! simplification, code-token proportions and their change. Ratios are kept
//! in exact rational arithmetic until rendering so the two-decimal
//! percentages are reproducible.

use crate::ast::{code_token_count, count_nodes, Ast};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use thiserror::Error;

type Rat = Ratio<i128>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("code tokens differ between original ({original}) and simplified ({simplified}) trees")]
    CodeTokenMismatch { original: u64, simplified: u64 },
}

/// Aggregate statistics over a corpus of (original, simplified) tree pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub fragments: usize,
    pub original_max: usize,
    pub simplified_max: usize,
    original_total: u64,
    simplified_total: u64,
    code_total: u64,
}

/// `1 - simplified_avg / original_avg`, as a fraction.
pub fn simplified_rate(original_avg: f64, simplified_avg: f64) -> f64 {
    1.0 - simplified_avg / original_avg
}

/// Difference of the two code-token rates, in percentage points.
pub fn percentage_increase(original_code_rate_pct: f64, simplified_code_rate_pct: f64) -> f64 {
    simplified_code_rate_pct - original_code_rate_pct
}

impl TreeStats {
    pub fn original_avg(&self) -> f64 {
        self.original_total as f64 / self.fragments as f64
    }

    pub fn simplified_avg(&self) -> f64 {
        self.simplified_total as f64 / self.fragments as f64
    }

    pub fn average_code_tokens(&self) -> f64 {
        self.code_total as f64 / self.fragments as f64
    }

    fn simplified_rate_exact(&self) -> Rat {
        Ratio::from_integer(1)
            - Ratio::new(self.simplified_total as i128, self.original_total as i128)
    }

    fn original_code_rate_exact(&self) -> Rat {
        Ratio::new(self.code_total as i128, self.original_total as i128)
    }

    fn simplified_code_rate_exact(&self) -> Rat {
        Ratio::new(self.code_total as i128, self.simplified_total as i128)
    }

    /// Fraction of nodes removed by simplification.
    pub fn simplified_rate(&self) -> f64 {
        self.simplified_rate_exact().to_f64().unwrap_or(f64::NAN)
    }

    /// Code tokens over all tokens in the original trees, as a fraction.
    pub fn original_code_rate(&self) -> f64 {
        self.original_code_rate_exact().to_f64().unwrap_or(f64::NAN)
    }

    /// Code tokens over all tokens in the simplified trees, as a fraction.
    pub fn simplified_code_rate(&self) -> f64 {
        self.simplified_code_rate_exact().to_f64().unwrap_or(f64::NAN)
    }

    /// Change of the code-token rate, in percentage points.
    pub fn percentage_increase(&self) -> f64 {
        rounded_percent(self.simplified_code_rate_exact())
            - rounded_percent(self.original_code_rate_exact())
    }

    /// Two rows in the layout of the simplification statistics table.
    pub fn to_csv_rows(&self, corpus_name: &str) -> String {
        let original = format!(
            "{},Original,{},{:.2},{}%,{:.2},{}%,{:.2}\n",
            corpus_name,
            self.original_max,
            self.original_avg(),
            format_percent(self.simplified_rate_exact()),
            self.average_code_tokens(),
            format_percent(self.original_code_rate_exact()),
            self.percentage_increase(),
        );
        let simplified = format!(
            "{},Simplified,{},{:.2},,,{}%,\n",
            corpus_name,
            self.simplified_max,
            self.simplified_avg(),
            format_percent(self.simplified_code_rate_exact()),
        );
        format!("{original}{simplified}")
    }

    pub fn csv_header() -> &'static str {
        "corpus,operation,max_token,average_token,simplified_rate,average_code_token,code_token_rate,percentage_increase\n"
    }
}

/// Percentage rounded to two decimals, half away from zero, from the exact
/// ratio.
fn rounded_percent(ratio: Rat) -> f64 {
    let scaled = ratio * Ratio::from_integer(10_000);
    let rounded = scaled.round().to_integer();
    rounded as f64 / 100.0
}

fn format_percent(ratio: Rat) -> String {
    let value = rounded_percent(ratio);
    format!("{value:.2}")
}

/// Token statistics of a corpus of (original, simplified) tree pairs.
pub fn tree_stats(corpus: &[(Ast, Ast)]) -> Result<TreeStats, ReportError> {
    if corpus.is_empty() {
        return Err(ReportError::EmptyCorpus);
    }
    let mut stats = TreeStats {
        fragments: corpus.len(),
        original_max: 0,
        simplified_max: 0,
        original_total: 0,
        simplified_total: 0,
        code_total: 0,
    };
    let mut simplified_code_total = 0u64;
    for (original, simplified) in corpus {
        let original_nodes = count_nodes(original);
        let simplified_nodes = count_nodes(simplified);
        stats.original_max = stats.original_max.max(original_nodes);
        stats.simplified_max = stats.simplified_max.max(simplified_nodes);
        stats.original_total += original_nodes as u64;
        stats.simplified_total += simplified_nodes as u64;
        stats.code_total += code_token_count(original) as u64;
        simplified_code_total += code_token_count(simplified) as u64;
    }
    if stats.code_total != simplified_code_total {
        return Err(ReportError::CodeTokenMismatch {
            original: stats.code_total,
            simplified: simplified_code_total,
        });
    }
    Ok(stats)
}
