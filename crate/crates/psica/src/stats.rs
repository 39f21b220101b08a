//! Chi-square independence test for m×2 count tables.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of testing an m×2 count table for column independence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChiSquareOutcome {
    /// The table carries no usable signal (fewer than two non-empty rows,
    /// or an empty column); treated as "no evidence of difference".
    Degenerate,
    Tested { statistic: f64, df: usize, p_value: f64 },
}

impl ChiSquareOutcome {
    /// True iff the test rejects independence at `alpha`.
    pub fn significant_at(&self, alpha: f64) -> bool {
        match self {
            ChiSquareOutcome::Degenerate => false,
            ChiSquareOutcome::Tested { p_value, .. } => *p_value <= alpha,
        }
    }
}

/// Pearson chi-square test of independence on an m×2 table. Rows whose
/// both counts are zero are dropped, with the degrees of freedom reduced
/// accordingly (df = kept rows − 1).
pub fn chi_square_independence(counts: &[(u64, u64)]) -> ChiSquareOutcome {
    let rows: Vec<(f64, f64)> = counts
        .iter()
        .filter(|&&(a, b)| a + b > 0)
        .map(|&(a, b)| (a as f64, b as f64))
        .collect();
    if rows.len() < 2 {
        return ChiSquareOutcome::Degenerate;
    }
    let col1: f64 = rows.iter().map(|r| r.0).sum();
    let col2: f64 = rows.iter().map(|r| r.1).sum();
    if col1 == 0.0 || col2 == 0.0 {
        return ChiSquareOutcome::Degenerate;
    }
    let total = col1 + col2;

    let mut statistic = 0.0;
    for &(a, b) in &rows {
        let row_total = a + b;
        let e1 = row_total * col1 / total;
        let e2 = row_total * col2 / total;
        statistic += (a - e1) * (a - e1) / e1 + (b - e2) * (b - e2) / e2;
    }
    let df = rows.len() - 1;
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    let p_value = (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0);
    ChiSquareOutcome::Tested {
        statistic,
        df,
        p_value,
    }
}
