use super::quadrature::integrate_adaptive;
use super::special::{normal_cdf, normal_pdf};
use super::{average_ranks_descending, check_shape, mean_ranks};
use crate::error::{Error, Result};

// The normal density is below 1e-18 outside this window.
const Z_LIMIT: f64 = 9.0;
const SF_TOL: f64 = 1e-11;

/// Upper tail of the studentized range of `k` standard normals (infinite
/// degrees of freedom).
///
/// Uses `sf(q) = k ∫ φ(z) [Φ(z)^(k-1) - (Φ(z) - Φ(z - q))^(k-1)] dz`, which
/// avoids the cancellation in `1 - cdf` for large `q`.
pub fn studentized_range_sf(q: f64, k: usize) -> Result<f64> {
    if q.is_nan() || q == f64::NEG_INFINITY {
        return Err(Error::invalid(format!(
            "studentized range q must be finite, got {q}"
        )));
    }
    if k < 2 {
        return Err(Error::invalid(format!(
            "studentized range needs k >= 2, got {k}"
        )));
    }
    if q < 0.0 {
        return Err(Error::invalid(format!(
            "studentized range q must be >= 0, got {q}"
        )));
    }
    if q == f64::INFINITY {
        return Ok(0.0);
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let km1 = (k - 1) as i32;
    let kf = k as f64;
    let integrand = |z: f64| {
        let upper = normal_cdf(z);
        let inner = upper - normal_cdf(z - q);
        kf * normal_pdf(z) * (upper.powi(km1) - inner.powi(km1))
    };
    let lower = integrate_adaptive(&integrand, -Z_LIMIT, 0.0, SF_TOL / 2.0)?;
    let upper = integrate_adaptive(&integrand, 0.0, Z_LIMIT + q.min(30.0), SF_TOL / 2.0)?;
    Ok((lower + upper).clamp(0.0, 1.0))
}

/// Pairwise Nemenyi p-values from mean ranks:
/// `p_ij = sf(|R_i - R_j| / sqrt(k (k + 1) / (12 n)), k)`.
pub fn nemenyi_test(scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (n, k) = check_shape(scores)?;
    let ranks: Vec<Vec<f64>> = scores.iter().map(|r| average_ranks_descending(r)).collect();
    let means = mean_ranks(&ranks);
    let scale = ((k * (k + 1)) as f64 / (12.0 * n as f64)).sqrt();

    let mut p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let q = (means[i] - means[j]).abs() / scale;
            let v = studentized_range_sf(q, k)?;
            p[i][j] = v;
            p[j][i] = v;
        }
    }
    Ok(p)
}
