use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ItemParameters, LabeledInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_BINS: usize = 5;

/// Equal-width histogram of one parameter, split by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    pub parameter: String,
    /// `bins + 1` edges from the observed minimum to maximum.
    pub edges: Vec<T>,
    pub majority: Vec<usize>,
    pub minority: Vec<usize>,
    pub mean: T,
    pub mean_majority: Option<T>,
    pub mean_minority: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint<T> {
    pub item_id: String,
    pub label: u8,
    pub b: T,
    pub a: T,
    pub c: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistributions<T> {
    pub n_items: usize,
    pub majority_label: u8,
    pub minority_label: u8,
    pub n_majority: usize,
    pub n_minority: usize,
    pub a: Histogram<T>,
    pub b: Histogram<T>,
    pub c: Histogram<T>,
    pub fraction_negative_a: T,
    pub scatter: Vec<ScatterPoint<T>>,
}

/// Histograms and scatter data of calibrated parameters.
///
/// The majority class is the label held by more items; a tie goes to
/// label 0.
pub fn parameter_distributions<T: Scalar>(
    items: &[ItemParameters<T>],
    labels: &[LabeledInstance],
    bins: usize,
) -> Result<ParameterDistributions<T>> {
    if items.is_empty() {
        return Err(Error::invalid("no items to summarize"));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let label_of: BTreeMap<&str, u8> = labels
        .iter()
        .map(|l| (l.instance_id.as_str(), l.label))
        .collect();
    let mut scatter = Vec::with_capacity(items.len());
    for item in items {
        item.validate()?;
        let label = *label_of
            .get(item.item_id.as_str())
            .ok_or_else(|| Error::invalid(format!("item `{}` has no class label", item.item_id)))?;
        scatter.push(ScatterPoint {
            item_id: item.item_id.clone(),
            label,
            b: item.b,
            a: item.a,
            c: item.c,
        });
    }
    scatter.sort_by(|x, y| x.item_id.cmp(&y.item_id));
    let n_pos = scatter.iter().filter(|p| p.label == 1).count();
    let n_neg = scatter.len() - n_pos;
    let (majority_label, minority_label) = if n_pos > n_neg { (1, 0) } else { (0, 1) };
    let classes: Vec<bool> = scatter.iter().map(|p| p.label == majority_label).collect();

    let hist = |name: &str, values: Vec<T>| histogram(name, &values, &classes, bins);
    let a = hist("a", scatter.iter().map(|p| p.a).collect());
    let b = hist("b", scatter.iter().map(|p| p.b).collect());
    let c = hist("c", scatter.iter().map(|p| p.c).collect());
    let negative = scatter.iter().filter(|p| p.a < T::zero()).count();
    Ok(ParameterDistributions {
        n_items: scatter.len(),
        majority_label,
        minority_label,
        n_majority: classes.iter().filter(|&&m| m).count(),
        n_minority: classes.iter().filter(|&&m| !m).count(),
        a,
        b,
        c,
        fraction_negative_a: T::from_count(negative) / T::from_count(scatter.len()),
        scatter,
    })
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>) -> Option<T> {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / T::from_count(n))
}

fn histogram<T: Scalar>(name: &str, values: &[T], majority: &[bool], bins: usize) -> Histogram<T> {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let width = (hi - lo) / T::from_count(bins);
    let edges: Vec<T> = (0..=bins)
        .map(|k| {
            if k == bins {
                hi
            } else {
                lo + width * T::from_count(k)
            }
        })
        .collect();
    let mut maj = vec![0; bins];
    let mut min = vec![0; bins];
    for (&v, &is_major) in values.iter().zip(majority) {
        let k = if width > T::zero() {
            ((v - lo) / width)
                .floor()
                .to_usize()
                .unwrap_or(0)
                .min(bins - 1)
        } else {
            0
        };
        if is_major {
            maj[k] += 1;
        } else {
            min[k] += 1;
        }
    }
    let pick = |want: bool| {
        values
            .iter()
            .zip(majority)
            .filter(move |(_, &m)| m == want)
            .map(|(&v, _)| v)
    };
    Histogram {
        parameter: name.to_string(),
        edges,
        majority: maj,
        minority: min,
        mean: mean(values.iter().copied()).expect("non-empty"),
        mean_majority: mean(pick(true)),
        mean_minority: mean(pick(false)),
    }
}
