use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AbilityEstimate, ConfusionCell, ConfusionPartition, ItemParameters};
use crate::error::{Error, Result};
use crate::irt::{icc_curve, information_unchecked, prob_unchecked, theta_grid};
use crate::scalar::Scalar;

/// Ability grid `[-4, 4]` with step `0.05`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    theta_grid(T::lit(-4.0), T::lit(4.0), T::lit(0.05)).expect("valid default grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary<T> {
    pub cell: ConfusionCell,
    pub n: usize,
    /// `None` for an empty cell.
    pub mean_a: Option<T>,
    pub mean_b: Option<T>,
    pub mean_c: Option<T>,
    /// Mean Fisher information at the model's ability.
    pub mean_information: Option<T>,
    /// `sum P` on correct cells, `-sum (1 - P)` on wrong ones.
    pub total_score_contribution: T,
    pub negative_discrimination_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCurve<T> {
    pub item_id: String,
    pub negative_discrimination: bool,
    /// Probabilities on the bundle grid.
    pub probabilities: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBundle<T> {
    pub summary: CellSummary<T>,
    pub curves: Vec<ItemCurve<T>>,
    pub mean_curve: Option<Vec<T>>,
}

/// ICC confusion-matrix curves of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iccmc<T> {
    pub model_id: String,
    pub theta: T,
    pub grid: Vec<T>,
    pub cells: Vec<CellBundle<T>>,
    /// Partition ids without calibrated parameters.
    pub dropped: Vec<String>,
}

impl<T: Scalar> Iccmc<T> {
    pub fn cell(&self, cell: ConfusionCell) -> &CellBundle<T> {
        self.cells
            .iter()
            .find(|b| b.summary.cell == cell)
            .expect("all four cells present")
    }

    pub fn total_score(&self) -> T {
        self.cells
            .iter()
            .fold(T::zero(), |acc, b| acc + b.summary.total_score_contribution)
    }
}

pub fn iccmc_summaries<T: Scalar>(
    partition: &ConfusionPartition,
    items: &[ItemParameters<T>],
    theta: &AbilityEstimate<T>,
    grid: &[T],
) -> Result<Iccmc<T>> {
    if !theta.theta.is_finite() {
        return Err(Error::invalid(format!(
            "ability of `{}` is not finite",
            theta.respondent_id
        )));
    }
    let mut by_id = BTreeMap::new();
    for item in items {
        item.validate()?;
        if by_id.insert(item.item_id.as_str(), item).is_some() {
            return Err(Error::invalid(format!(
                "duplicate item id `{}`",
                item.item_id
            )));
        }
    }
    let t = theta.theta;
    let mut dropped = Vec::new();
    let mut cells = Vec::with_capacity(4);
    for cell in ConfusionCell::ALL {
        let mut members = Vec::new();
        for id in partition.cell(cell) {
            match by_id.get(id.as_str()) {
                Some(item) => members.push(*item),
                None => dropped.push(id.clone()),
            }
        }
        cells.push(bundle(cell, &members, t, grid)?);
    }
    dropped.sort();
    Ok(Iccmc {
        model_id: theta.respondent_id.clone(),
        theta: t,
        grid: grid.to_vec(),
        cells,
        dropped,
    })
}

fn bundle<T: Scalar>(
    cell: ConfusionCell,
    members: &[&ItemParameters<T>],
    theta: T,
    grid: &[T],
) -> Result<CellBundle<T>> {
    let n = members.len();
    let mean = |f: &dyn Fn(&ItemParameters<T>) -> T| {
        (n > 0).then(|| members.iter().fold(T::zero(), |acc, it| acc + f(it)) / T::from_count(n))
    };
    let contribution = members.iter().fold(T::zero(), |acc, it| {
        let p = prob_unchecked(theta, it);
        if cell.is_correct() {
            acc + p
        } else {
            acc - (T::one() - p)
        }
    });
    let summary = CellSummary {
        cell,
        n,
        mean_a: mean(&|it| it.a),
        mean_b: mean(&|it| it.b),
        mean_c: mean(&|it| it.c),
        mean_information: mean(&|it| information_unchecked(theta, it)),
        total_score_contribution: contribution,
        negative_discrimination_count: members.iter().filter(|it| it.a < T::zero()).count(),
    };
    let curves = members
        .iter()
        .map(|it| {
            Ok(ItemCurve {
                item_id: it.item_id.clone(),
                negative_discrimination: it.a < T::zero(),
                probabilities: icc_curve(it, grid)?
                    .into_iter()
                    .map(|s| s.probability)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_curve = (n > 0).then(|| {
        (0..grid.len())
            .map(|g| {
                curves
                    .iter()
                    .fold(T::zero(), |acc, c| acc + c.probabilities[g])
                    / T::from_count(n)
            })
            .collect()
    });
    Ok(CellBundle {
        summary,
        curves,
        mean_curve,
    })
}
