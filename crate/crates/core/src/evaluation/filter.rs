use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{BinaryOutcome, ItemParameters};
use crate::scalar::Scalar;

/// Split of calibrated items by the sign of their discrimination.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminationFilter {
    pub retained: BTreeSet<String>,
    /// Items with `a < 0`.
    pub removed: BTreeSet<String>,
}

impl DiscriminationFilter {
    pub fn keeps(&self, id: &str) -> bool {
        !self.removed.contains(id)
    }
}

pub fn filter_negative_discrimination<T: Scalar>(
    items: &[ItemParameters<T>],
) -> DiscriminationFilter {
    let mut out = DiscriminationFilter::default();
    for item in items {
        if item.a < T::zero() {
            out.removed.insert(item.item_id.clone());
        } else {
            out.retained.insert(item.item_id.clone());
        }
    }
    out
}

/// Outcomes on instances the filter does not remove.
pub fn filter_outcomes(
    outcomes: &[BinaryOutcome],
    filter: &DiscriminationFilter,
) -> Vec<BinaryOutcome> {
    outcomes
        .iter()
        .filter(|o| filter.keeps(&o.instance_id))
        .cloned()
        .collect()
}
