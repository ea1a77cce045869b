//! Two-stage calibration: marginal maximum likelihood for the item
//! parameters (Bock–Aitkin EM over a fixed quadrature grid with a
//! standard-normal ability prior), then bounded maximum likelihood for each
//! respondent's ability against the calibrated items.
//!
//! All reductions run in a fixed order so results do not depend on the
//! number of worker threads.

mod ability;
mod mstep;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ability::{estimate_ability, response_log_likelihood};

use crate::data::{AbilityEstimate, ItemParameters, ResponseMatrix};
use crate::error::{Error, Result};
use mstep::{log_probs, Bounds, ItemObjective};

/// Half-width of the quadrature grid.
pub const QUADRATURE_LIMIT: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Equally spaced nodes on `[-6, 6]`.
    pub quadrature_points: usize,
    pub max_em_iterations: usize,
    /// Stop when no parameter moves by more than this between iterations.
    pub em_tolerance: f64,
    pub c_upper: f64,
    pub ability_bounds: (f64, f64),
    /// Recorded for reproducibility; the EM itself uses no random restarts.
    pub seed: u64,
    pub initial_a: f64,
    pub initial_c: f64,
    /// Box keeping |a| and |b| finite for near-Guttman or flat items.
    pub max_abs_a: f64,
    pub max_abs_b: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            quadrature_points: 61,
            max_em_iterations: 200,
            em_tolerance: 1e-4,
            c_upper: 0.999,
            ability_bounds: (-6.0, 6.0),
            seed: 0,
            initial_a: 1.0,
            initial_c: 0.1,
            max_abs_a: 30.0,
            max_abs_b: 30.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_points < 11 {
            return Err(Error::invalid(format!(
                "quadrature_points must be >= 11, got {}",
                self.quadrature_points
            )));
        }
        if !(self.em_tolerance > 0.0) {
            return Err(Error::invalid("em_tolerance must be positive"));
        }
        if self.max_em_iterations == 0 {
            return Err(Error::invalid("max_em_iterations must be positive"));
        }
        if !(self.c_upper > 0.0 && self.c_upper < 1.0) {
            return Err(Error::invalid(format!(
                "c_upper {} outside (0, 1)",
                self.c_upper
            )));
        }
        let (lo, hi) = self.ability_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "invalid ability bounds ({lo}, {hi})"
            )));
        }
        if !(self.initial_c >= 0.0 && self.initial_c <= self.c_upper) {
            return Err(Error::invalid("initial_c outside [0, c_upper]"));
        }
        if !(self.max_abs_a > 0.0 && self.max_abs_b > 0.0) || !self.initial_a.is_finite() {
            return Err(Error::invalid("parameter limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedItem {
    pub item_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub items: Vec<ItemParameters<f64>>,
    pub excluded_items: Vec<ExcludedItem>,
    /// Marginal log-likelihood at the returned parameters.
    pub log_likelihood: f64,
    /// Marginal log-likelihood at the start of every EM iteration, plus the final value.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl CalibrationResult {
    pub fn item_ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.item_id.as_str()).collect()
    }
}

pub const DEGENERATE_COLUMN: &str = "degenerate column";

struct Quadrature {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Quadrature {
    fn standard_normal(points: usize) -> Self {
        let step = 2.0 * QUADRATURE_LIMIT / (points - 1) as f64;
        let nodes: Vec<f64> = (0..points)
            .map(|k| -QUADRATURE_LIMIT + k as f64 * step)
            .collect();
        let raw: Vec<f64> = nodes.iter().map(|t| -0.5 * t * t).collect();
        let norm = log_sum_exp(&raw);
        let log_weights = raw.iter().map(|w| w - norm).collect();
        Self { nodes, log_weights }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Distinct response patterns with multiplicities, sorted by pattern.
struct Patterns {
    rows: Vec<Vec<u8>>,
    counts: Vec<f64>,
}

impl Patterns {
    fn from_matrix(matrix: &ResponseMatrix) -> Self {
        let mut map: BTreeMap<&[u8], usize> = BTreeMap::new();
        for row in matrix.rows() {
            *map.entry(row).or_default() += 1;
        }
        let (rows, counts) = map.into_iter().map(|(r, c)| (r.to_vec(), c as f64)).unzip();
        Self { rows, counts }
    }
}

struct EStep {
    log_likelihood: f64,
    /// Expected respondents per node.
    total: Vec<f64>,
    /// Expected correct answers per item and node.
    correct: Vec<Vec<f64>>,
}

fn e_step(patterns: &Patterns, params: &[[f64; 3]], quad: &Quadrature) -> Result<EStep> {
    let nq = quad.nodes.len();
    let tables: Vec<(Vec<f64>, Vec<f64>)> = params
        .par_iter()
        .map(|&[a, b, c]| quad.nodes.iter().map(|&t| log_probs(t, a, b, c)).unzip())
        .collect();

    let posteriors: Vec<(Vec<f64>, f64)> = patterns
        .rows
        .par_iter()
        .map(|row| {
            let mut ll = quad.log_weights.clone();
            for (u, (lp, lq)) in row.iter().zip(&tables) {
                let table = if *u == 1 { lp } else { lq };
                for (acc, v) in ll.iter_mut().zip(table) {
                    *acc += v;
                }
            }
            let norm = log_sum_exp(&ll);
            let post = ll.iter().map(|v| (v - norm).exp()).collect();
            (post, norm)
        })
        .collect();

    let mut log_likelihood = 0.0;
    let mut total = vec![0.0; nq];
    for ((post, norm), &count) in posteriors.iter().zip(&patterns.counts) {
        log_likelihood += count * norm;
        for (t, w) in total.iter_mut().zip(post) {
            *t += count * w;
        }
    }
    if !log_likelihood.is_finite() {
        return Err(Error::Numerical(
            "marginal log-likelihood is not finite".into(),
        ));
    }

    let correct = (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut r = vec![0.0; nq];
            for ((row, (post, _)), &count) in
                patterns.rows.iter().zip(&posteriors).zip(&patterns.counts)
            {
                if row[i] == 1 {
                    for (acc, w) in r.iter_mut().zip(post) {
                        *acc += count * w;
                    }
                }
            }
            r
        })
        .collect();

    Ok(EStep {
        log_likelihood,
        total,
        correct,
    })
}

fn initial_params(facility: f64, config: &CalibrationConfig) -> [f64; 3] {
    let p = facility.clamp(1e-3, 1.0 - 1e-3);
    let b = ((1.0 - p) / p)
        .ln()
        .clamp(-config.max_abs_b, config.max_abs_b);
    [config.initial_a, b, config.initial_c]
}

/// Marginal maximum-likelihood 3PL calibration.
///
/// All-0 and all-1 columns are excluded up front since their likelihood has
/// no interior maximum. Items that did not settle within the tolerance are
/// still returned, with `converged = false`.
pub fn calibrate_items(
    matrix: &ResponseMatrix,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    config.validate()?;
    if matrix.n_respondents() < 2 {
        return Err(Error::invalid(format!(
            "calibration needs at least 2 respondents, got {}",
            matrix.n_respondents()
        )));
    }
    let sums = matrix.column_sums();
    let n = matrix.n_respondents();
    let mut usable = Vec::new();
    let mut excluded_items = Vec::new();
    for (i, &s) in sums.iter().enumerate() {
        if s == 0 || s == n {
            excluded_items.push(ExcludedItem {
                item_id: matrix.item_ids()[i].clone(),
                reason: DEGENERATE_COLUMN.to_string(),
            });
        } else {
            usable.push(i);
        }
    }
    if usable.len() < 2 {
        return Err(Error::invalid(format!(
            "calibration needs at least 2 non-degenerate items, got {}",
            usable.len()
        )));
    }
    let sub = matrix.select_items(&usable);
    let patterns = Patterns::from_matrix(&sub);
    let quad = Quadrature::standard_normal(config.quadrature_points);
    let bounds = Bounds {
        lower: [-config.max_abs_a, -config.max_abs_b, 0.0],
        upper: [config.max_abs_a, config.max_abs_b, config.c_upper],
    };

    let mut params: Vec<[f64; 3]> = usable
        .iter()
        .map(|&i| initial_params(sums[i] as f64 / n as f64, config))
        .collect();
    let mut last_change = vec![f64::INFINITY; params.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;

    while iterations_used < config.max_em_iterations {
        let e = e_step(&patterns, &params, &quad)?;
        trace.push(e.log_likelihood);
        iterations_used += 1;

        let updated: Vec<[f64; 3]> = params
            .par_iter()
            .zip(&e.correct)
            .map(|(&start, correct)| {
                let objective = ItemObjective {
                    nodes: &quad.nodes,
                    total: &e.total,
                    correct,
                };
                mstep::maximize(&objective, start, &bounds)
            })
            .collect();

        for ((old, new), change) in params.iter().zip(&updated).zip(last_change.iter_mut()) {
            *change = (0..3).map(|k| (new[k] - old[k]).abs()).fold(0.0, f64::max);
        }
        params = updated;
        if last_change.iter().all(|&c| c < config.em_tolerance) {
            converged = true;
            break;
        }
    }
    let final_e = e_step(&patterns, &params, &quad)?;
    trace.push(final_e.log_likelihood);

    let items = usable
        .iter()
        .zip(&params)
        .zip(&last_change)
        .map(|((&i, &[a, b, c]), &change)| ItemParameters {
            item_id: matrix.item_ids()[i].clone(),
            a,
            b,
            c,
            converged: change < config.em_tolerance,
        })
        .collect();

    Ok(CalibrationResult {
        items,
        excluded_items,
        log_likelihood: final_e.log_likelihood,
        log_likelihood_trace: trace,
        iterations_used,
        converged,
    })
}

/// Estimates abilities of every respondent in `matrix` against calibrated
/// items, matching columns by item id. Columns the calibration excluded are
/// ignored.
pub fn estimate_abilities(
    matrix: &ResponseMatrix,
    items: &[ItemParameters<f64>],
    bounds: (f64, f64),
) -> Result<Vec<AbilityEstimate<f64>>> {
    let index = matrix.item_index();
    let columns = items
        .iter()
        .map(|it| {
            index.get(it.item_id.as_str()).copied().ok_or_else(|| {
                Error::invalid(format!(
                    "calibrated item `{}` missing from responses",
                    it.item_id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aligned = matrix.select_items(&columns);
    (0..aligned.n_respondents())
        .into_par_iter()
        .map(|j| estimate_ability(&aligned.respondent_ids()[j], aligned.row(j), items, bounds))
        .collect()
}

/// Calibrates items on the full population, then estimates each
/// respondent's ability against them.
pub fn birnbaum_fit(
    matrix: &ResponseMatrix,
    config: &CalibrationConfig,
) -> Result<(CalibrationResult, Vec<AbilityEstimate<f64>>)> {
    let calibration = calibrate_items(matrix, config)?;
    let abilities = estimate_abilities(matrix, &calibration.items, config.ability_bounds)?;
    Ok((calibration, abilities))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[u8]]) -> ResponseMatrix {
        let r: Vec<String> = (0..rows.len()).map(|j| format!("r{j:03}")).collect();
        let i: Vec<String> = (0..rows[0].len()).map(|k| format!("i{k:02}")).collect();
        ResponseMatrix::new(r, i, rows.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    #[test]
    fn degenerate_columns_are_excluded() {
        let m = matrix(&[&[1, 0, 1, 0], &[1, 0, 0, 1], &[1, 0, 1, 1], &[1, 0, 0, 0]]);
        let r = calibrate_items(&m, &CalibrationConfig::default()).unwrap();
        let ex: Vec<&str> = r
            .excluded_items
            .iter()
            .map(|e| e.item_id.as_str())
            .collect();
        assert_eq!(ex, vec!["i00", "i01"]);
        assert!(r
            .excluded_items
            .iter()
            .all(|e| e.reason == DEGENERATE_COLUMN));
        assert_eq!(r.items.len() + r.excluded_items.len(), 4);
    }

    #[test]
    fn too_few_usable_items_is_an_error() {
        let m = matrix(&[&[1, 0, 1], &[1, 0, 0]]);
        assert!(calibrate_items(&m, &CalibrationConfig::default()).is_err());
        let one = matrix(&[&[1, 0, 1]]);
        assert!(calibrate_items(&one, &CalibrationConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = CalibrationConfig::default();
        c.quadrature_points = 5;
        assert!(c.validate().is_err());
        let mut c = CalibrationConfig::default();
        c.em_tolerance = 0.0;
        assert!(c.validate().is_err());
        let mut c = CalibrationConfig::default();
        c.ability_bounds = (1.0, -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_reads_partial_json() {
        let c: CalibrationConfig = serde_json::from_str(r#"{"max_em_iterations": 50}"#).unwrap();
        assert_eq!(c.max_em_iterations, 50);
        assert_eq!(c.quadrature_points, 61);
        assert!(serde_json::from_str::<CalibrationConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn quadrature_weights_normalized() {
        let q = Quadrature::standard_normal(61);
        let total: f64 = q.log_weights.iter().map(|w| w.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(q.nodes[30], 0.0);
        assert_eq!(q.nodes[0], -6.0);
    }

    #[test]
    fn identical_rows_get_identical_abilities() {
        let row: &[u8] = &[1, 0, 1, 1, 0];
        let mut rows = vec![row; 6];
        let other: &[u8] = &[0, 1, 0, 1, 1];
        rows.push(other);
        let m = matrix(&rows);
        let (_, abilities) = birnbaum_fit(&m, &CalibrationConfig::default()).unwrap();
        for a in &abilities[1..6] {
            assert_eq!(a.theta, abilities[0].theta);
        }
    }
}
