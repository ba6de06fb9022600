//! Weighted logistic regression on up to three covariates, solved by damped
//! Newton iterations. Shared by the Platt and beta calibrators.

use super::sigmoid;

pub(super) struct LogisticFit {
    pub coefs: Vec<f64>,
    pub converged: bool,
}

/// Maximizes the weighted Bernoulli log-likelihood of
/// `sigmoid(sum_k coefs[k] * z[i][k])`.
///
/// `z` is row-major with one row per sample (include a constant column for
/// the intercept). Stops when the gradient max-norm drops below `tol` or
/// after `max_iter` Newton steps; each step is halved until the likelihood
/// stops decreasing.
pub(super) fn fit_logistic(
    z: &[Vec<f64>],
    labels: &[f64],
    weights: &[f64],
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> LogisticFit {
    let k = init.len();
    let mut coefs = init.to_vec();
    let mut nll = neg_log_likelihood(z, labels, weights, &coefs);
    let mut converged = false;

    for _ in 0..max_iter {
        let mut grad = vec![0.0f64; k];
        let mut hess = vec![0.0f64; k * k];
        for ((row, &y), &w) in z.iter().zip(labels).zip(weights) {
            let eta: f64 = row.iter().zip(&coefs).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let resid = w * (y - mu);
            let curv = w * (mu * (1.0 - mu)).max(1e-12);
            for a in 0..k {
                grad[a] += resid * row[a];
                for b in a..k {
                    hess[a * k + b] += curv * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[a * k + b] = hess[b * k + a];
            }
            hess[a * k + a] += 1e-10; // keeps near-collinear designs solvable
        }
        if grad.iter().all(|g| g.abs() < tol) {
            converged = true;
            break;
        }
        let Some(step) = solve_spd(&hess, &grad, k) else {
            break;
        };
        // backtracking line search on the Newton step
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = coefs
                .iter()
                .zip(&step)
                .map(|(c, s)| c + scale * s)
                .collect();
            let trial_nll = neg_log_likelihood(z, labels, weights, &trial);
            if trial_nll <= nll + 1e-12 {
                coefs = trial;
                nll = trial_nll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LogisticFit { coefs, converged }
}

fn neg_log_likelihood(z: &[Vec<f64>], labels: &[f64], weights: &[f64], coefs: &[f64]) -> f64 {
    let mut nll = 0.0;
    for ((row, &y), &w) in z.iter().zip(labels).zip(weights) {
        let eta: f64 = row.iter().zip(coefs).map(|(a, b)| a * b).sum();
        // -log p(y | mu) written in the numerically stable log1p form
        let log1p_exp = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        nll += w * (log1p_exp - y * eta);
    }
    nll
}

/// Gaussian elimination with partial pivoting for the tiny SPD systems here.
fn solve_spd(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut m = vec![0.0f64; k * (k + 1)];
    for r in 0..k {
        for c in 0..k {
            m[r * (k + 1) + c] = a[r * k + c];
        }
        m[r * (k + 1) + k] = b[r];
    }
    for col in 0..k {
        let mut pivot = col;
        for r in col + 1..k {
            if m[r * (k + 1) + col].abs() > m[pivot * (k + 1) + col].abs() {
                pivot = r;
            }
        }
        if m[pivot * (k + 1) + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..=k {
                m.swap(pivot * (k + 1) + c, col * (k + 1) + c);
            }
        }
        let d = m[col * (k + 1) + col];
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = m[r * (k + 1) + col] / d;
            for c in col..=k {
                m[r * (k + 1) + c] -= f * m[col * (k + 1) + c];
            }
        }
    }
    Some((0..k).map(|r| m[r * (k + 1) + k] / m[r * (k + 1) + r]).collect())
}
