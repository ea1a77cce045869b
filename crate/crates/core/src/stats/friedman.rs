use serde::{Deserialize, Serialize};

use super::special::chi2_sf;
use super::{average_ranks_descending, check_shape};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub p_value: f64,
    pub dof: usize,
    /// Divisor `1 - sum(t^3 - t) / (n k (k^2 - 1))` applied to the statistic.
    pub tie_correction: f64,
    /// Every block is fully tied; the statistic is undefined and p is set to 1.
    pub degenerate: bool,
}

/// Tie-corrected Friedman test with `k - 1` degrees of freedom.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n, k) = check_shape(scores)?;
    let (nf, kf) = (n as f64, k as f64);

    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in scores {
        for (s, r) in rank_sums.iter_mut().zip(average_ranks_descending(row)) {
            *s += r;
        }
        tie_term += tie_cubes(row);
    }

    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let statistic = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let tie_correction = 1.0 - tie_term / (nf * kf * (kf * kf - 1.0));
    let dof = k - 1;

    if tie_correction <= f64::EPSILON {
        return Ok(FriedmanResult {
            chi2: 0.0,
            p_value: 1.0,
            dof,
            tie_correction,
            degenerate: true,
        });
    }
    // rounding can push a zero statistic slightly negative
    let chi2 = (statistic / tie_correction).max(0.0);
    Ok(FriedmanResult {
        chi2,
        p_value: chi2_sf(chi2, dof as f64)?,
        dof,
        tie_correction,
        degenerate: false,
    })
}

// Sum of t^3 - t over tie groups of one block.
fn tie_cubes(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        total += t * t * t - t;
        start = end;
    }
    total
}
