use crate::data::{AbilityEstimate, ItemParameters};
use crate::error::{Error, Result};
use crate::irt::logistic;
use crate::scalar::Scalar;

const SCAN_INTERVALS: usize = 240;
const THETA_TOL: f64 = 1e-6;

/// Bernoulli log-likelihood of a response vector at `theta`.
pub fn response_log_likelihood<T: Scalar>(
    theta: T,
    responses: &[u8],
    items: &[ItemParameters<T>],
) -> T {
    let one = T::one();
    items
        .iter()
        .zip(responses)
        .fold(T::zero(), |acc, (it, &u)| {
            let s = logistic(it.a * (theta - it.b));
            let term = if u == 1 {
                (it.c + (one - it.c) * s).ln()
            } else {
                ((one - it.c) * (one - s)).ln()
            };
            acc + term
        })
}

/// Bounded maximum-likelihood ability.
///
/// A coarse scan over the bounds locates the best grid cell, which a
/// golden-section search then refines to `1e-6`. Estimates within the
/// tolerance of a bound are snapped onto it and flagged.
pub fn estimate_ability<T: Scalar>(
    respondent_id: &str,
    responses: &[u8],
    items: &[ItemParameters<T>],
    bounds: (T, T),
) -> Result<AbilityEstimate<T>> {
    if responses.is_empty() || items.is_empty() {
        return Err(Error::invalid("ability estimation needs at least one item"));
    }
    if responses.len() != items.len() {
        return Err(Error::invalid(format!(
            "{} responses for {} items",
            responses.len(),
            items.len()
        )));
    }
    if let Some(u) = responses.iter().find(|&&u| u > 1) {
        return Err(Error::invalid(format!("response {u} is not dichotomous")));
    }
    items.iter().try_for_each(|it| it.validate())?;
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!(
            "invalid ability bounds ({lo}, {hi})"
        )));
    }

    let ll = |t: T| response_log_likelihood(t, responses, items);
    let step = (hi - lo) / T::from_count(SCAN_INTERVALS);
    let mut best_k = 0;
    let mut best = T::neg_infinity();
    for k in 0..=SCAN_INTERVALS {
        let t = if k == SCAN_INTERVALS {
            hi
        } else {
            lo + step * T::from_count(k)
        };
        let v = ll(t);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if !best.is_finite() {
        return Err(Error::Numerical(format!(
            "log-likelihood of `{respondent_id}` is not finite on the search interval"
        )));
    }
    let centre = lo + step * T::from_count(best_k);
    let left = (centre - step).max(lo);
    let right = (centre + step).min(hi);

    let tol = T::lit(THETA_TOL).max(T::epsilon() * T::lit(8.0) * lo.abs().max(hi.abs()));
    let mut theta = golden_section_max(&ll, left, right, tol);
    // the bracket may contain the bound itself; compare directly
    for edge in [lo, hi] {
        if (edge - theta).abs() <= step && ll(edge) >= ll(theta) {
            theta = edge;
        }
    }
    let at_bound = (theta - lo).abs() <= tol || (hi - theta).abs() <= tol;
    if (theta - lo).abs() <= tol {
        theta = lo;
    } else if (hi - theta).abs() <= tol {
        theta = hi;
    }
    Ok(AbilityEstimate {
        respondent_id: respondent_id.to_string(),
        theta,
        at_bound,
    })
}

fn golden_section_max<T: Scalar, F: Fn(T) -> T>(f: &F, mut a: T, mut b: T, tol: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let mid = (a + b) / T::lit(2.0);
    // keep the best evaluated point
    let fm = f(mid);
    if f1 > fm && f1 >= f2 {
        x1
    } else if f2 > fm {
        x2
    } else {
        mid
    }
}
