//! Three-parameter logistic model: response probability, item
//! characteristic curves, Fisher information and the True/Total scores.

use serde::{Deserialize, Serialize};

use crate::data::ItemParameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Logistic function evaluated without overflow for any finite input.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check_finite<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

/// Probability that a respondent of ability `theta` answers `item` correctly.
pub fn prob_correct<T: Scalar>(theta: T, item: &ItemParameters<T>) -> Result<T> {
    check_finite("theta", theta)?;
    item.validate()?;
    Ok(prob_unchecked(theta, item))
}

#[inline]
pub(crate) fn prob_unchecked<T: Scalar>(theta: T, item: &ItemParameters<T>) -> T {
    item.c + (T::one() - item.c) * logistic(item.a * (theta - item.b))
}

/// One point on an item characteristic curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccSample<T> {
    pub theta: T,
    pub probability: T,
}

/// Samples the item characteristic curve on `grid`.
///
/// The grid must be non-empty, finite and nondecreasing.
pub fn icc_curve<T: Scalar>(item: &ItemParameters<T>, grid: &[T]) -> Result<Vec<IccSample<T>>> {
    if grid.is_empty() {
        return Err(Error::invalid("ability grid is empty"));
    }
    item.validate()?;
    for (k, &t) in grid.iter().enumerate() {
        check_finite("grid point", t)?;
        if k > 0 && t < grid[k - 1] {
            return Err(Error::invalid(format!(
                "ability grid decreases at position {k}"
            )));
        }
    }
    Ok(grid
        .iter()
        .map(|&theta| IccSample {
            theta,
            probability: prob_unchecked(theta, item),
        })
        .collect())
}

/// Equally spaced grid from `lo` to `hi` inclusive.
pub fn theta_grid<T: Scalar>(lo: T, hi: T, step: T) -> Result<Vec<T>> {
    check_finite("grid start", lo)?;
    check_finite("grid end", hi)?;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::invalid(format!(
            "grid step must be positive, got {step}"
        )));
    }
    if hi < lo {
        return Err(Error::invalid(format!("grid end {hi} below start {lo}")));
    }
    // half-step slack absorbs rounding in (hi - lo) / step
    let n = ((hi - lo) / step + T::lit(0.5))
        .floor()
        .to_usize()
        .unwrap_or(0);
    Ok((0..=n).map(|k| lo + step * T::from_count(k)).collect())
}

/// Fisher information of a 3PL item at `theta`:
/// `a^2 * (Q/P) * ((P - c)/(1 - c))^2`.
pub fn item_information<T: Scalar>(theta: T, item: &ItemParameters<T>) -> Result<T> {
    check_finite("theta", theta)?;
    item.validate()?;
    Ok(information_unchecked(theta, item))
}

#[inline]
pub(crate) fn information_unchecked<T: Scalar>(theta: T, item: &ItemParameters<T>) -> T {
    // (P - c)/(1 - c) is the plain logistic, and Q = (1 - c)(1 - s), which
    // keeps the expression finite as P approaches c.
    let s = logistic(item.a * (theta - item.b));
    let one = T::one();
    let p = item.c + (one - item.c) * s;
    let q = (one - item.c) * (one - s);
    item.a * item.a * s * s * q / p
}

fn sum_probabilities<T: Scalar>(theta: T, items: &[ItemParameters<T>]) -> T {
    items
        .iter()
        .fold(T::zero(), |acc, it| acc + prob_unchecked(theta, it))
}

fn validate_items<T: Scalar>(items: &[ItemParameters<T>]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("item list is empty"));
    }
    items.iter().try_for_each(|it| it.validate())
}

/// Expected number (or fraction, when `normalize`) of correct answers.
pub fn true_score<T: Scalar>(theta: T, items: &[ItemParameters<T>], normalize: bool) -> Result<T> {
    check_finite("theta", theta)?;
    validate_items(items)?;
    let sum = sum_probabilities(theta, items);
    Ok(if normalize {
        sum / T::from_count(items.len())
    } else {
        sum
    })
}

/// True score penalized by the error probability of every missed item:
/// `sum_correct P_i - sum_wrong (1 - P_i)`.
pub fn total_score<T: Scalar>(
    theta: T,
    items: &[ItemParameters<T>],
    responses: &[u8],
    normalize: bool,
) -> Result<T> {
    check_finite("theta", theta)?;
    validate_items(items)?;
    if responses.len() != items.len() {
        return Err(Error::invalid(format!(
            "{} responses for {} items",
            responses.len(),
            items.len()
        )));
    }
    let mut sum = T::zero();
    for (item, &u) in items.iter().zip(responses) {
        let p = prob_unchecked(theta, item);
        sum = match u {
            1 => sum + p,
            0 => sum - (T::one() - p),
            v => return Err(Error::invalid(format!("response {v} is not dichotomous"))),
        };
    }
    Ok(if normalize {
        sum / T::from_count(items.len())
    } else {
        sum
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair<T> {
    pub true_score: T,
    pub total_score: T,
    pub normalized: bool,
}

pub fn score_pair<T: Scalar>(
    theta: T,
    items: &[ItemParameters<T>],
    responses: &[u8],
    normalize: bool,
) -> Result<ScorePair<T>> {
    Ok(ScorePair {
        true_score: true_score(theta, items, normalize)?,
        total_score: total_score(theta, items, responses, normalize)?,
        normalized: normalize,
    })
}
