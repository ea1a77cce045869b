//! Domain types shared across the crate.
//!
//! Every container carries its id vectors so that calibration, scoring and
//! reporting can be joined by instance or model id rather than by position.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_binary(instance: &str, value: i64) -> Result<u8> {
    match value {
        0 => Ok(0),
        1 => Ok(1),
        _ => Err(Error::NonBinaryLabel {
            instance: instance.to_string(),
            value,
        }),
    }
}

/// Dichotomous correctness matrix, respondents (rows) by items (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    respondent_ids: Vec<String>,
    item_ids: Vec<String>,
    cells: Vec<u8>,
}

impl ResponseMatrix {
    pub fn new(
        respondent_ids: Vec<String>,
        item_ids: Vec<String>,
        rows: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if rows.len() != respondent_ids.len() {
            return Err(Error::invalid(format!(
                "{} rows for {} respondent ids",
                rows.len(),
                respondent_ids.len()
            )));
        }
        let mut cells = Vec::with_capacity(rows.len() * item_ids.len());
        for (row, id) in rows.iter().zip(&respondent_ids) {
            if row.len() != item_ids.len() {
                return Err(Error::invalid(format!(
                    "row `{id}` has {} cells, expected {}",
                    row.len(),
                    item_ids.len()
                )));
            }
            cells.extend_from_slice(row);
        }
        Self::from_flat(respondent_ids, item_ids, cells)
    }

    /// Builds a matrix from row-major cells.
    pub fn from_flat(
        respondent_ids: Vec<String>,
        item_ids: Vec<String>,
        cells: Vec<u8>,
    ) -> Result<Self> {
        if cells.len() != respondent_ids.len() * item_ids.len() {
            return Err(Error::invalid(format!(
                "{} cells for a {}x{} matrix",
                cells.len(),
                respondent_ids.len(),
                item_ids.len()
            )));
        }
        ensure_unique("respondent", &respondent_ids)?;
        ensure_unique("item", &item_ids)?;
        if let Some(pos) = cells.iter().position(|&v| v > 1) {
            let n = item_ids.len();
            return Err(Error::invalid(format!(
                "cell ({}, {}) = {} is not dichotomous",
                respondent_ids[pos / n],
                item_ids[pos % n],
                cells[pos]
            )));
        }
        Ok(Self {
            respondent_ids,
            item_ids,
            cells,
        })
    }

    pub fn respondent_ids(&self) -> &[String] {
        &self.respondent_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn n_respondents(&self) -> usize {
        self.respondent_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn row(&self, respondent: usize) -> &[u8] {
        let n = self.n_items();
        &self.cells[respondent * n..(respondent + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        // chunks_exact panics on zero width
        let n = self.n_items().max(1);
        self.cells.chunks_exact(n).take(self.n_respondents())
    }

    pub fn get(&self, respondent: usize, item: usize) -> u8 {
        self.cells[respondent * self.n_items() + item]
    }

    pub fn column(&self, item: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.n_respondents()).map(move |j| self.get(j, item))
    }

    /// Number of correct answers per item.
    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.n_items()];
        for row in self.rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v as usize;
            }
        }
        sums
    }

    /// Fraction of items the respondent answered correctly.
    pub fn row_mean(&self, respondent: usize) -> f64 {
        let row = self.row(respondent);
        let hits = row.iter().map(|&v| v as usize).sum::<usize>();
        hits as f64 / row.len() as f64
    }

    /// Keeps only the given columns, in the given order.
    pub fn select_items(&self, columns: &[usize]) -> Self {
        let item_ids = columns.iter().map(|&i| self.item_ids[i].clone()).collect();
        let mut cells = Vec::with_capacity(self.n_respondents() * columns.len());
        for row in self.rows() {
            cells.extend(columns.iter().map(|&i| row[i]));
        }
        Self {
            respondent_ids: self.respondent_ids.clone(),
            item_ids,
            cells,
        }
    }

    pub fn item_index(&self) -> BTreeMap<&str, usize> {
        self.item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

fn ensure_unique(axis: &str, ids: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate {axis} id `{id}`")));
        }
    }
    Ok(())
}

/// Calibrated 3PL parameters of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters<T> {
    pub item_id: String,
    /// Discrimination. Negative values mark items anti-correlated with ability.
    pub a: T,
    /// Difficulty, on the ability scale.
    pub b: T,
    /// Guessing floor in `[0, 1)`.
    pub c: T,
    pub converged: bool,
}

impl<T: Scalar> ItemParameters<T> {
    pub fn new(item_id: impl Into<String>, a: T, b: T, c: T) -> Result<Self> {
        let item = Self {
            item_id: item_id.into(),
            a,
            b,
            c,
            converged: true,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::invalid(format!(
                "item `{}` has non-finite a or b",
                self.item_id
            )));
        }
        if !(self.c >= T::zero() && self.c < T::one()) {
            return Err(Error::invalid(format!(
                "item `{}` has guessing {} outside [0, 1)",
                self.item_id, self.c
            )));
        }
        Ok(())
    }

    pub fn with_converged(mut self, converged: bool) -> Self {
        self.converged = converged;
        self
    }
}

/// Latent ability of one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate<T> {
    pub respondent_id: String,
    pub theta: T,
    /// The maximizer sits on the search boundary.
    pub at_bound: bool,
}

/// Ground-truth label of one instance. Positive class is 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub instance_id: String,
    pub label: u8,
}

impl LabeledInstance {
    pub fn new(instance_id: impl Into<String>, label: i64) -> Result<Self> {
        let instance_id = instance_id.into();
        let label = check_binary(&instance_id, label)?;
        Ok(Self { instance_id, label })
    }
}

/// Hard predictions of one model over a set of instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub model_id: String,
    pub predictions: Vec<LabeledInstance>,
}

impl ModelPredictions {
    pub fn new(model_id: impl Into<String>, predictions: Vec<LabeledInstance>) -> Self {
        Self {
            model_id: model_id.into(),
            predictions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryOutcome {
    pub instance_id: String,
    pub true_label: u8,
    pub predicted_label: u8,
}

impl BinaryOutcome {
    pub fn new(
        instance_id: impl Into<String>,
        true_label: i64,
        predicted_label: i64,
    ) -> Result<Self> {
        let instance_id = instance_id.into();
        let true_label = check_binary(&instance_id, true_label)?;
        let predicted_label = check_binary(&instance_id, predicted_label)?;
        Ok(Self {
            instance_id,
            true_label,
            predicted_label,
        })
    }

    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }

    pub fn cell(&self) -> ConfusionCell {
        match (self.true_label, self.predicted_label) {
            (1, 1) => ConfusionCell::TruePositive,
            (0, 1) => ConfusionCell::FalsePositive,
            (1, 0) => ConfusionCell::FalseNegative,
            _ => ConfusionCell::TrueNegative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfusionCell {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "FN")]
    FalseNegative,
    #[serde(rename = "TN")]
    TrueNegative,
}

impl ConfusionCell {
    pub const ALL: [ConfusionCell; 4] = [
        ConfusionCell::TruePositive,
        ConfusionCell::FalsePositive,
        ConfusionCell::FalseNegative,
        ConfusionCell::TrueNegative,
    ];

    /// Whether the model answered the instances of this cell correctly.
    pub fn is_correct(self) -> bool {
        matches!(
            self,
            ConfusionCell::TruePositive | ConfusionCell::TrueNegative
        )
    }

    pub fn code(self) -> &'static str {
        match self {
            ConfusionCell::TruePositive => "TP",
            ConfusionCell::FalsePositive => "FP",
            ConfusionCell::FalseNegative => "FN",
            ConfusionCell::TrueNegative => "TN",
        }
    }
}

/// Instance ids of one model split by confusion-matrix cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPartition {
    pub tp: BTreeSet<String>,
    pub fp: BTreeSet<String>,
    pub fn_: BTreeSet<String>,
    pub tn: BTreeSet<String>,
}

impl ConfusionPartition {
    /// Fails on duplicated instance ids, which would break disjointness.
    pub fn from_outcomes(outcomes: &[BinaryOutcome]) -> Result<Self> {
        let mut partition = Self::default();
        for o in outcomes {
            let inserted = partition.cell_mut(o.cell()).insert(o.instance_id.clone());
            if !inserted {
                return Err(Error::invalid(format!(
                    "duplicate instance id `{}`",
                    o.instance_id
                )));
            }
        }
        let total: usize = ConfusionCell::ALL
            .iter()
            .map(|&c| partition.cell(c).len())
            .sum();
        if total != outcomes.len() {
            return Err(Error::invalid("duplicate instance ids across cells"));
        }
        Ok(partition)
    }

    pub fn cell(&self, cell: ConfusionCell) -> &BTreeSet<String> {
        match cell {
            ConfusionCell::TruePositive => &self.tp,
            ConfusionCell::FalsePositive => &self.fp,
            ConfusionCell::FalseNegative => &self.fn_,
            ConfusionCell::TrueNegative => &self.tn,
        }
    }

    fn cell_mut(&mut self, cell: ConfusionCell) -> &mut BTreeSet<String> {
        match cell {
            ConfusionCell::TruePositive => &mut self.tp,
            ConfusionCell::FalsePositive => &mut self.fp,
            ConfusionCell::FalseNegative => &mut self.fn_,
            ConfusionCell::TrueNegative => &mut self.tn,
        }
    }

    pub fn len(&self) -> usize {
        self.tp.len() + self.fp.len() + self.fn_.len() + self.tn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairs a model's predictions with ground truth, sorted by instance id.
///
/// The prediction set must cover exactly the labelled instances.
pub fn join_outcomes(
    truth: &[LabeledInstance],
    model: &ModelPredictions,
) -> Result<Vec<BinaryOutcome>> {
    let truth_map = index_unique("label", truth)?;
    let pred_map = index_unique(
        &format!("prediction of model `{}`", model.model_id),
        &model.predictions,
    )?;

    let missing: Vec<String> = truth_map
        .keys()
        .filter(|id| !pred_map.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInstances {
            model: model.model_id.clone(),
            ids: missing,
        });
    }
    let extra: Vec<String> = pred_map
        .keys()
        .filter(|id| !truth_map.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    if !extra.is_empty() {
        return Err(Error::ExtraInstances {
            model: model.model_id.clone(),
            ids: extra,
        });
    }

    truth_map
        .iter()
        .map(|(id, &t)| BinaryOutcome::new(*id, t as i64, pred_map[id] as i64))
        .collect()
}

fn index_unique<'a>(what: &str, rows: &'a [LabeledInstance]) -> Result<BTreeMap<&'a str, u8>> {
    let mut map = BTreeMap::new();
    for r in rows {
        check_binary(&r.instance_id, r.label as i64)?;
        if map.insert(r.instance_id.as_str(), r.label).is_some() {
            return Err(Error::invalid(format!(
                "duplicate instance id `{}` in {what}",
                r.instance_id
            )));
        }
    }
    Ok(map)
}

/// Builds the models-by-instances correctness matrix.
///
/// Rows are sorted by model id and columns by instance id, so the result
/// does not depend on input order.
pub fn build_response_matrix(
    truth: &[LabeledInstance],
    predictions: &[ModelPredictions],
) -> Result<ResponseMatrix> {
    let mut by_model: BTreeMap<&str, &ModelPredictions> = BTreeMap::new();
    for p in predictions {
        if by_model.insert(p.model_id.as_str(), p).is_some() {
            return Err(Error::invalid(format!(
                "duplicate model id `{}`",
                p.model_id
            )));
        }
    }
    let item_ids: Vec<String> = index_unique("label", truth)?
        .keys()
        .map(|s| s.to_string())
        .collect();

    let mut respondent_ids = Vec::with_capacity(by_model.len());
    let mut cells = Vec::with_capacity(by_model.len() * item_ids.len());
    for (model_id, model) in by_model {
        let outcomes = join_outcomes(truth, model)?;
        cells.extend(outcomes.iter().map(|o| o.is_correct() as u8));
        respondent_ids.push(model_id.to_string());
    }
    ResponseMatrix::from_flat(respondent_ids, item_ids, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(labels: &[(&str, i64)]) -> Vec<LabeledInstance> {
        labels
            .iter()
            .map(|(id, l)| LabeledInstance::new(*id, *l).unwrap())
            .collect()
    }

    fn model(id: &str, labels: &[(&str, i64)]) -> ModelPredictions {
        ModelPredictions::new(id, truth(labels))
    }

    #[test]
    fn perfect_respondent_has_all_ones() {
        let t = truth(&[("a", 1), ("b", 0), ("c", 1)]);
        let m = build_response_matrix(&t, &[model("m", &[("a", 1), ("b", 0), ("c", 1)])]).unwrap();
        assert_eq!(m.row(0), &[1, 1, 1]);
    }

    #[test]
    fn correctness_is_label_agreement() {
        let t = truth(&[("i1", 1), ("i2", 0)]);
        let m = build_response_matrix(&t, &[model("m", &[("i1", 1), ("i2", 1)])]).unwrap();
        assert_eq!(m.row(0), &[1, 0]);
    }

    #[test]
    fn rows_and_columns_are_sorted() {
        let t = truth(&[("z", 1), ("a", 0)]);
        let preds = vec![
            model("m2", &[("z", 0), ("a", 0)]),
            model("m1", &[("a", 1), ("z", 1)]),
        ];
        let m = build_response_matrix(&t, &preds).unwrap();
        assert_eq!(m.respondent_ids(), &["m1", "m2"]);
        assert_eq!(m.item_ids(), &["a", "z"]);
        assert_eq!(m.row(0), &[0, 1]);
        assert_eq!(m.row(1), &[1, 0]);
    }

    #[test]
    fn missing_and_extra_ids_name_the_model() {
        let t = truth(&[("a", 1), ("b", 0)]);
        let err = build_response_matrix(&t, &[model("m", &[("a", 1)])]).unwrap_err();
        match err {
            Error::MissingInstances { model, ids } => {
                assert_eq!(model, "m");
                assert_eq!(ids, vec!["b".to_string()]);
            }
            e => panic!("unexpected {e:?}"),
        }
        let err =
            build_response_matrix(&t, &[model("m", &[("a", 1), ("b", 1), ("c", 0)])]).unwrap_err();
        assert!(matches!(err, Error::ExtraInstances { ref ids, .. } if ids == &["c"]));
    }

    #[test]
    fn non_binary_labels_are_rejected() {
        assert!(matches!(
            LabeledInstance::new("x", 2),
            Err(Error::NonBinaryLabel { value: 2, .. })
        ));
        assert!(BinaryOutcome::new("x", 1, -1).is_err());
        let bad = vec![LabeledInstance {
            instance_id: "x".into(),
            label: 7,
        }];
        assert!(build_response_matrix(&bad, &[]).is_err());
    }

    #[test]
    fn matrix_rejects_non_dichotomous_cells_and_duplicate_ids() {
        assert!(ResponseMatrix::new(vec!["r".into()], vec!["i".into()], vec![vec![2]]).is_err());
        assert!(ResponseMatrix::new(
            vec!["r".into(), "r".into()],
            vec!["i".into()],
            vec![vec![1], vec![0]]
        )
        .is_err());
        assert!(ResponseMatrix::new(
            vec!["r".into()],
            vec!["i".into(), "j".into()],
            vec![vec![1]]
        )
        .is_err());
    }

    #[test]
    fn partition_cells_follow_labels() {
        let outcomes = vec![
            BinaryOutcome::new("tp", 1, 1).unwrap(),
            BinaryOutcome::new("fp", 0, 1).unwrap(),
            BinaryOutcome::new("fn", 1, 0).unwrap(),
            BinaryOutcome::new("tn", 0, 0).unwrap(),
        ];
        let p = ConfusionPartition::from_outcomes(&outcomes).unwrap();
        assert!(
            p.tp.contains("tp")
                && p.fp.contains("fp")
                && p.fn_.contains("fn")
                && p.tn.contains("tn")
        );
        assert_eq!(p.len(), 4);
        let dup = vec![outcomes[0].clone(), outcomes[0].clone()];
        assert!(ConfusionPartition::from_outcomes(&dup).is_err());
    }

    #[test]
    fn item_parameters_validate_guessing() {
        assert!(ItemParameters::new("i", 1.0, 0.0, 1.0).is_err());
        assert!(ItemParameters::new("i", 1.0, 0.0, -0.1).is_err());
        assert!(ItemParameters::new("i", f64::NAN, 0.0, 0.1).is_err());
        assert!(ItemParameters::new("i", -3.0, 0.0, 0.0).is_ok());
    }
}
