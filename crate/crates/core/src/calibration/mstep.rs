//! Per-item maximization of the expected complete-data log-likelihood.
//!
//! Given expected counts at each quadrature node (`n_q` respondents, of whom
//! `r_q` answer correctly) the item objective is
//! `sum_q r_q ln P(θ_q) + (n_q - r_q) ln(1 - P(θ_q))`.
//! It is maximized by Fisher scoring with box constraints and a backtracking
//! line search that only accepts strict improvements, so every M-step is a
//! generalized EM step.

use crate::irt::logistic;

/// Box on the three parameters `(a, b, c)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Bounds {
    fn project(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = x;
        for k in 0..3 {
            out[k] = out[k].clamp(self.lower[k], self.upper[k]);
        }
        out
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// `(ln P, ln(1 - P))` for the 3PL, accurate in both tails.
#[inline]
pub(crate) fn log_probs(theta: f64, a: f64, b: f64, c: f64) -> (f64, f64) {
    let z = a * (theta - b);
    let ln_c = if c > 0.0 { c.ln() } else { f64::NEG_INFINITY };
    let ln_1mc = (-c).ln_1p();
    let ln_p = log_add_exp(ln_c, ln_1mc + log_sigmoid(z));
    let ln_q = ln_1mc + log_sigmoid(-z);
    (ln_p, ln_q)
}

pub(crate) struct ItemObjective<'a> {
    pub nodes: &'a [f64],
    pub total: &'a [f64],
    pub correct: &'a [f64],
}

impl ItemObjective<'_> {
    pub fn value(&self, x: [f64; 3]) -> f64 {
        let [a, b, c] = x;
        let mut f = 0.0;
        for ((&t, &n), &r) in self.nodes.iter().zip(self.total).zip(self.correct) {
            let (lp, lq) = log_probs(t, a, b, c);
            // 0 * -inf is taken as 0
            if r > 0.0 {
                f += r * lp;
            }
            let miss = n - r;
            if miss > 0.0 {
                f += miss * lq;
            }
        }
        f
    }

    /// Score vector and expected information matrix.
    fn score_and_information(&self, x: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let [a, b, c] = x;
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for ((&t, &n), &r) in self.nodes.iter().zip(self.total).zip(self.correct) {
            let s = logistic(a * (t - b));
            let p = c + (1.0 - c) * s;
            let q = (1.0 - c) * (1.0 - s);
            let pq = (p * q).max(1e-300);
            let slope = (1.0 - c) * s * (1.0 - s);
            let dp = [slope * (t - b), -a * slope, 1.0 - s];
            let resid = (r - n * p) / pq;
            let weight = n / pq;
            for i in 0..3 {
                g[i] += resid * dp[i];
                for j in 0..3 {
                    h[i][j] += weight * dp[i] * dp[j];
                }
            }
        }
        (g, h)
    }
}

const INNER_ITERATIONS: usize = 25;
const MAX_HALVINGS: usize = 40;

/// Improves `start` on `objective`; never returns a point with a lower value.
pub(crate) fn maximize(
    objective: &ItemObjective<'_>,
    start: [f64; 3],
    bounds: &Bounds,
) -> [f64; 3] {
    let mut x = bounds.project(start);
    let mut fx = objective.value(x);
    for _ in 0..INNER_ITERATIONS {
        let (g, h) = objective.score_and_information(x);
        let free: [bool; 3] = std::array::from_fn(|k| {
            let at_lower = x[k] <= bounds.lower[k] && g[k] < 0.0;
            let at_upper = x[k] >= bounds.upper[k] && g[k] > 0.0;
            !(at_lower || at_upper)
        });
        let Some(dir) = scoring_direction(&g, &h, &free) else {
            break;
        };
        let mut improved = None;
        let mut step = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial = bounds.project(std::array::from_fn(|k| x[k] + step * dir[k]));
            let ft = objective.value(trial);
            if ft.is_finite() && ft > fx {
                improved = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = improved else {
            break;
        };
        let moved = (0..3).map(|k| (next[k] - x[k]).abs()).fold(0.0, f64::max);
        x = next;
        fx = fnext;
        if moved < 1e-9 {
            break;
        }
    }
    x
}

// Solves (H + ridge) d = g over the free coordinates.
fn scoring_direction(g: &[f64; 3], h: &[[f64; 3]; 3], free: &[bool; 3]) -> Option<[f64; 3]> {
    let idx: Vec<usize> = (0..3).filter(|&k| free[k]).collect();
    if idx.is_empty() {
        return None;
    }
    let m = idx.len();
    let scale = idx
        .iter()
        .map(|&k| h[k][k].abs())
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut ridge = 1e-10 * scale;
    for _ in 0..20 {
        let mut a = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for (r, &i) in idx.iter().enumerate() {
            rhs[r] = g[i];
            for (c, &j) in idx.iter().enumerate() {
                a[r][c] = h[i][j];
            }
            a[r][r] += ridge;
        }
        if let Some(sol) = cholesky_solve(&a, &rhs) {
            let mut d = [0.0; 3];
            for (r, &i) in idx.iter().enumerate() {
                d[i] = sol[r];
            }
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge *= 100.0;
    }
    None
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
