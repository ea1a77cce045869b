//! Confusion-matrix metrics, model rankings, ICCMC cell summaries,
//! negative-discrimination filtering and parameter distributions.

mod distributions;
mod filter;
mod iccmc;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BinaryOutcome, ConfusionCell};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use distributions::{
    parameter_distributions, Histogram, ParameterDistributions, ScatterPoint, DEFAULT_BINS,
};
pub use filter::{filter_negative_discrimination, filter_outcomes, DiscriminationFilter};
pub use iccmc::{default_grid, iccmc_summaries, CellBundle, CellSummary, Iccmc, ItemCurve};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn errors(&self) -> usize {
        self.fp + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }
}

pub fn confusion_counts(outcomes: &[BinaryOutcome]) -> Result<ConfusionCounts> {
    if outcomes.is_empty() {
        return Err(Error::invalid("no outcomes to count"));
    }
    let mut counts = ConfusionCounts::default();
    for o in outcomes {
        match o.cell() {
            ConfusionCell::TruePositive => counts.tp += 1,
            ConfusionCell::FalsePositive => counts.fp += 1,
            ConfusionCell::FalseNegative => counts.fn_ += 1,
            ConfusionCell::TrueNegative => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// The eight evaluation measures that can be ranked and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1,
    Precision,
    Recall,
    Auc,
    Specificity,
    TrueScore,
    TotalScore,
}

impl Metric {
    pub const CLASSIC: [Metric; 6] = [
        Metric::Accuracy,
        Metric::F1,
        Metric::Precision,
        Metric::Recall,
        Metric::Auc,
        Metric::Specificity,
    ];

    pub const ALL: [Metric; 8] = [
        Metric::Accuracy,
        Metric::F1,
        Metric::Precision,
        Metric::Recall,
        Metric::Auc,
        Metric::Specificity,
        Metric::TrueScore,
        Metric::TotalScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Auc => "auc",
            Metric::Specificity => "specificity",
            Metric::TrueScore => "true_score",
            Metric::TotalScore => "total_score",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let key = match key.as_str() {
            "truescore" => "true_score",
            "totalscore" => "total_score",
            "f1_score" => "f1",
            other => other,
        }
        .to_string();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                let known: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
                Error::invalid(format!(
                    "unknown metric `{s}`; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

/// Classic metrics of hard binary predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicMetrics<T> {
    pub accuracy: T,
    pub f1: T,
    pub precision: T,
    pub recall: T,
    /// Balanced accuracy, the AUC of a single operating point.
    pub auc: T,
    pub specificity: T,
    /// Metrics whose denominator was zero and were set to 0.
    pub degenerate: Vec<Metric>,
}

impl<T: Scalar> ClassicMetrics<T> {
    pub fn get(&self, metric: Metric) -> Option<T> {
        match metric {
            Metric::Accuracy => Some(self.accuracy),
            Metric::F1 => Some(self.f1),
            Metric::Precision => Some(self.precision),
            Metric::Recall => Some(self.recall),
            Metric::Auc => Some(self.auc),
            Metric::Specificity => Some(self.specificity),
            Metric::TrueScore | Metric::TotalScore => None,
        }
    }
}

pub fn classic_metrics<T: Scalar>(
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
) -> Result<ClassicMetrics<T>> {
    let total = tp + fp + fn_ + tn;
    if total == 0 {
        return Err(Error::invalid("confusion counts are all zero"));
    }
    let mut degenerate = Vec::new();
    let mut ratio = |num: usize, den: usize, metric: Metric| {
        if den == 0 {
            degenerate.push(metric);
            T::zero()
        } else {
            T::from_count(num) / T::from_count(den)
        }
    };
    let accuracy = ratio(tp + tn, total, Metric::Accuracy);
    let precision = ratio(tp, tp + fp, Metric::Precision);
    let recall = ratio(tp, tp + fn_, Metric::Recall);
    let specificity = ratio(tn, tn + fp, Metric::Specificity);
    let f1 = if precision + recall > T::zero() {
        T::lit(2.0) * precision * recall / (precision + recall)
    } else {
        degenerate.push(Metric::F1);
        T::zero()
    };
    let auc = (recall + specificity) / T::lit(2.0);
    if degenerate.contains(&Metric::Recall) || degenerate.contains(&Metric::Specificity) {
        degenerate.push(Metric::Auc);
    }
    degenerate.sort();
    Ok(ClassicMetrics {
        accuracy,
        f1,
        precision,
        recall,
        auc,
        specificity,
        degenerate,
    })
}

pub fn metrics_from_counts<T: Scalar>(counts: &ConfusionCounts) -> Result<ClassicMetrics<T>> {
    classic_metrics(counts.tp, counts.fp, counts.fn_, counts.tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow<T> {
    pub model_id: String,
    pub counts: ConfusionCounts,
    pub metrics: ClassicMetrics<T>,
    /// Normalized True Score.
    pub true_score: Option<T>,
    /// Normalized Total Score, in `[-1, 1]`.
    pub total_score: Option<T>,
}

impl<T: Scalar> MetricRow<T> {
    pub fn value(&self, metric: Metric) -> Option<T> {
        match metric {
            Metric::TrueScore => self.true_score,
            Metric::TotalScore => self.total_score,
            m => self.metrics.get(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable<T> {
    pub rows: Vec<MetricRow<T>>,
}

impl<T: Scalar> MetricTable<T> {
    /// Rows sorted by model id.
    pub fn new(mut rows: Vec<MetricRow<T>>) -> Result<Self> {
        rows.sort_by(|x, y| x.model_id.cmp(&y.model_id));
        if let Some(w) = rows.windows(2).find(|w| w[0].model_id == w[1].model_id) {
            return Err(Error::invalid(format!(
                "duplicate model id `{}`",
                w[0].model_id
            )));
        }
        Ok(Self { rows })
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.model_id.as_str()).collect()
    }

    /// Metrics present for every model.
    pub fn available_metrics(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|&m| !self.rows.is_empty() && self.rows.iter().all(|r| r.value(m).is_some()))
            .collect()
    }

    pub fn column(&self, metric: Metric) -> Result<Vec<T>> {
        self.rows
            .iter()
            .map(|r| {
                r.value(metric).ok_or_else(|| {
                    Error::invalid(format!(
                        "metric `{metric}` missing for model `{}`",
                        r.model_id
                    ))
                })
            })
            .collect()
    }

    pub fn ranks(&self, metric: Metric) -> Result<Vec<usize>> {
        competition_ranks(&self.column(metric)?)
    }
}

/// Competition ranks ("1224"), higher values first.
pub fn competition_ranks<T: Scalar>(values: &[T]) -> Result<Vec<usize>> {
    if let Some(v) = values.iter().find(|v| v.is_nan()) {
        return Err(Error::invalid(format!("cannot rank value {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).expect("no NaN"));
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && values[order[pos - 1]] == values[i] {
            ranks[order[pos - 1]]
        } else {
            pos + 1
        };
    }
    Ok(ranks)
}

/// Ranks of every model on the named metric, in table row order.
pub fn rank_models<T: Scalar>(table: &MetricTable<T>, metric: &str) -> Result<Vec<usize>> {
    table.ranks(metric.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(x: f64, y: f64) -> bool {
        (x - y).abs() <= 0.0005
    }

    #[test]
    fn gradient_boosting_row() {
        let m = classic_metrics::<f64>(25, 3, 11, 42).unwrap();
        let got = [
            m.accuracy,
            m.f1,
            m.precision,
            m.recall,
            m.auc,
            m.specificity,
        ];
        let want = [0.827, 0.781, 0.893, 0.694, 0.814, 0.933];
        for (g, w) in got.iter().zip(want) {
            assert!(close(*g, w), "{g} vs {w}");
        }
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn random_forest_row() {
        let m = classic_metrics::<f64>(28, 8, 8, 37).unwrap();
        assert!(close(m.accuracy, 0.802));
        assert!(close(m.precision, 0.778));
        assert!(close(m.recall, 0.778));
        assert!(close(m.specificity, 0.822));
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let m = classic_metrics::<f32>(7, 0, 0, 9).unwrap();
        for metric in Metric::CLASSIC {
            assert_eq!(m.get(metric), Some(1.0));
        }
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let m = classic_metrics::<f64>(0, 0, 36, 45).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.degenerate, vec![Metric::F1, Metric::Precision]);
        let m = classic_metrics::<f64>(0, 0, 0, 5).unwrap();
        assert!(m.degenerate.contains(&Metric::Recall));
        assert!(m.degenerate.contains(&Metric::Auc));
        assert!(classic_metrics::<f64>(0, 0, 0, 0).is_err());
    }

    #[test]
    fn counts_from_outcomes() {
        let mut outcomes = Vec::new();
        for k in 0..36 {
            outcomes.push(BinaryOutcome::new(format!("p{k}"), 1, 1).unwrap());
        }
        for k in 0..45 {
            outcomes.push(BinaryOutcome::new(format!("n{k}"), 0, 1).unwrap());
        }
        assert_eq!(
            confusion_counts(&outcomes).unwrap(),
            ConfusionCounts::new(36, 45, 0, 0)
        );
        assert!(confusion_counts(&[]).is_err());
    }

    #[test]
    fn competition_ranking() {
        let r = competition_ranks(&[0.827, 0.802, 0.802, 0.802, 0.790]).unwrap();
        assert_eq!(r, vec![1, 2, 2, 2, 5]);
        assert_eq!(competition_ranks(&[0.5; 4]).unwrap(), vec![1; 4]);
        assert_eq!(
            competition_ranks(&[4.0, 3.0, 2.0, 1.0]).unwrap(),
            vec![1, 2, 3, 4]
        );
        assert_eq!(competition_ranks(&[1.0, 3.0, 2.0]).unwrap(), vec![3, 1, 2]);
        assert!(competition_ranks(&[1.0, f64::NAN]).is_err());
    }

    fn row(id: &str, counts: ConfusionCounts) -> MetricRow<f64> {
        MetricRow {
            model_id: id.into(),
            counts,
            metrics: metrics_from_counts(&counts).unwrap(),
            true_score: None,
            total_score: None,
        }
    }

    #[test]
    fn ranking_by_name() {
        let table = MetricTable::new(vec![
            row("rf", ConfusionCounts::new(28, 8, 8, 37)),
            row("gb", ConfusionCounts::new(25, 3, 11, 42)),
        ])
        .unwrap();
        assert_eq!(table.model_ids(), vec!["gb", "rf"]);
        assert_eq!(rank_models(&table, "accuracy").unwrap(), vec![1, 2]);
        assert_eq!(rank_models(&table, "Recall").unwrap(), vec![2, 1]);
        assert!(rank_models(&table, "kappa").is_err());
        // scores were not attached
        assert!(rank_models(&table, "total_score").is_err());
        assert_eq!(table.available_metrics(), Metric::CLASSIC.to_vec());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.name())
            );
        }
        assert_eq!("TotalScore".parse::<Metric>().unwrap(), Metric::TotalScore);
    }

    proptest! {
        #[test]
        fn metric_identities(tp in 0usize..60, fp in 0usize..60, fn_ in 0usize..60, tn in 0usize..60) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let m = classic_metrics::<f64>(tp, fp, fn_, tn).unwrap();
            prop_assert_eq!(m.auc, (m.recall + m.specificity) / 2.0);
            if m.precision + m.recall > 0.0 {
                let f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((f1 - m.f1).abs() <= 1e-12);
            }
            for metric in Metric::CLASSIC {
                let v = m.get(metric).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
