//! Rank-based comparison of evaluation metrics: Friedman omnibus test,
//! Nemenyi post-hoc test and the confidence transform.
//!
//! Blocks are models (rows), treatments are metrics (columns). Within each
//! block the highest score gets rank 1 and ties share their average rank.

mod friedman;
mod nemenyi;
pub mod quadrature;
pub mod special;

pub use friedman::{friedman_test, FriedmanResult};
pub use nemenyi::{nemenyi_test, studentized_range_sf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores of `n` blocks on `k` treatments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub block_ids: Vec<String>,
    pub treatments: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(
        block_ids: Vec<String>,
        treatments: Vec<String>,
        scores: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if scores.len() != block_ids.len() {
            return Err(Error::invalid(format!(
                "{} score rows for {} blocks",
                scores.len(),
                block_ids.len()
            )));
        }
        for (id, row) in block_ids.iter().zip(&scores) {
            if row.len() != treatments.len() {
                return Err(Error::invalid(format!(
                    "block `{id}` has {} scores for {} treatments",
                    row.len(),
                    treatments.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "block `{id}` has non-finite score {v}"
                )));
            }
        }
        Ok(Self {
            block_ids,
            treatments,
            scores,
        })
    }
}

pub(crate) fn check_shape(scores: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 blocks, got {n}")));
    }
    let k = scores[0].len();
    if k < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 treatments, got {k}"
        )));
    }
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(Error::invalid(format!(
                "block {i} has {} scores, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("block {i} has a non-finite score")));
        }
    }
    Ok((n, k))
}

/// Average ranks of one block, highest score first.
pub fn average_ranks_descending(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&i, &j| row[j].total_cmp(&row[i]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && row[order[end]] == row[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Within-block average ranks for every block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub blocks: Vec<String>,
    pub treatments: Vec<String>,
    pub ranks: Vec<Vec<f64>>,
}

impl RankMatrix {
    pub fn from_table(table: &ScoreTable) -> Self {
        Self {
            blocks: table.block_ids.clone(),
            treatments: table.treatments.clone(),
            ranks: table
                .scores
                .iter()
                .map(|r| average_ranks_descending(r))
                .collect(),
        }
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        mean_ranks(&self.ranks)
    }
}

pub(crate) fn mean_ranks(ranks: &[Vec<f64>]) -> Vec<f64> {
    let n = ranks.len() as f64;
    let k = ranks.first().map_or(0, |r| r.len());
    (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

/// Confidence that two treatments differ, `1 - p`.
pub fn confidence(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    Ok(1.0 - p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub treatments: Vec<String>,
    pub rank_matrix: RankMatrix,
    pub mean_ranks: Vec<f64>,
    pub friedman: FriedmanResult,
    /// Symmetric `k x k` matrix with unit diagonal.
    pub nemenyi_p: Vec<Vec<f64>>,
    pub confidence: Vec<Vec<f64>>,
}

impl TestReport {
    pub fn p_value(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.treatments.iter().position(|t| t == a)?;
        let j = self.treatments.iter().position(|t| t == b)?;
        Some(self.nemenyi_p[i][j])
    }
}

/// Runs the Friedman and Nemenyi tests over a score table.
pub fn compare(table: &ScoreTable) -> Result<TestReport> {
    let friedman = friedman_test(&table.scores)?;
    let nemenyi_p = nemenyi_test(&table.scores)?;
    let confidence = nemenyi_p
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| confidence(p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rank_matrix = RankMatrix::from_table(table);
    Ok(TestReport {
        treatments: table.treatments.clone(),
        mean_ranks: rank_matrix.mean_ranks(),
        rank_matrix,
        friedman,
        nemenyi_p,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_descending_with_ties() {
        assert_eq!(
            average_ranks_descending(&[0.3, 0.9, 0.3, 0.1]),
            vec![2.5, 1.0, 2.5, 4.0]
        );
        assert_eq!(
            average_ranks_descending(&[1.0, 1.0, 1.0]),
            vec![2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn confidence_transform() {
        assert!((confidence(0.0227).unwrap() - 0.9773).abs() < 1e-12);
        assert_eq!(confidence(1.0).unwrap(), 0.0);
        assert!((confidence(0.4775).unwrap() - 0.5225).abs() < 1e-12);
        assert!(confidence(1.2).is_err());
        assert!(confidence(-0.1).is_err());
        assert!(confidence(f64::NAN).is_err());
    }

    #[test]
    fn score_table_validation() {
        assert!(ScoreTable::new(vec!["a".into()], vec!["x".into()], vec![vec![1.0, 2.0]]).is_err());
        assert!(ScoreTable::new(vec!["a".into()], vec!["x".into()], vec![vec![f64::NAN]]).is_err());
    }

    proptest! {
        #[test]
        fn rank_rows_sum_to_triangular_number(row in prop::collection::vec(0u8..5, 3..12)) {
            let row: Vec<f64> = row.into_iter().map(f64::from).collect();
            let k = row.len() as f64;
            let sum: f64 = average_ranks_descending(&row).iter().sum();
            prop_assert!((sum - k * (k + 1.0) / 2.0).abs() < 1e-12);
        }
    }
}
