//! Weighted binary-response maximum likelihood by Fisher scoring with
//! step-halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::link::Link;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean norm of the score, with case
    /// weights normalized to mean one.
    pub tolerance: f64,
    /// Added to the information diagonal before solving.
    pub ridge: f64,
    /// Coefficient norm beyond which a threshold is treated as perfectly
    /// separated.
    pub separation_bound: f64,
    /// Fit thresholds on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 100,
            tolerance: 1e-8,
            ridge: 1e-10,
            separation_bound: 1e4,
            parallel: true,
        }
    }
}

/// Row-major design matrix.
#[derive(Debug, Clone)]
pub struct Design {
    pub values: Vec<f64>,
    pub cols: usize,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.values.len() / self.cols
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BinaryFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub separated: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_likelihood(x: &Design, y: &[bool], w: &[f64], link: Link, beta: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let eta = dot(x.row(i), beta);
            w[i] * if y[i] { link.ln_cdf(eta) } else { link.ln_sf(eta) }
        })
        .sum()
}

fn score_and_information(x: &Design, y: &[bool], w: &[f64], link: Link, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = x.cols;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    for i in 0..x.rows() {
        let row = x.row(i);
        let (s, h) = link.score_and_info(dot(row, beta), y[i]);
        let (s, h) = (w[i] * s, w[i] * h);
        for a in 0..p {
            grad[a] += s * row[a];
            let ha = h * row[a];
            for b in 0..=a {
                info[a * p + b] += ha * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[b * p + a] = info[a * p + b];
        }
    }
    (grad, info)
}

fn solve(info: Vec<f64>, grad: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let p = grad.len();
    let mut m = DMatrix::from_row_slice(p, p, &info);
    for a in 0..p {
        m[(a, a)] += ridge;
    }
    let rhs = DVector::from_column_slice(grad);
    let step = match m.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => m.lu().solve(&rhs)?,
    };
    step.iter()
        .all(|v| v.is_finite())
        .then(|| step.iter().copied().collect())
}

/// Maximizes `Σ w_i [y_i ln Λ(x_i'β) + (1 - y_i) ln(1 - Λ(x_i'β))]`.
///
/// Starts from zero with the intercept (column 0) at `Λ⁻¹(ȳ_w)`; callers must
/// ensure both response values occur with positive weight.
pub(crate) fn fit_binary(x: &Design, y: &[bool], w: &[f64], link: Link, cfg: &SolverConfig) -> BinaryFit {
    let p = x.cols;
    let total: f64 = w.iter().sum();
    let ybar: f64 = w.iter().zip(y).filter(|(_, &yi)| yi).map(|(wi, _)| wi).sum::<f64>() / total;
    let mut beta = vec![0.0; p];
    beta[0] = link.quantile(ybar);
    let mut ll = log_likelihood(x, y, w, link, &beta);
    let mut iterations = 0;
    loop {
        let (grad, info) = score_and_information(x, y, w, link, &beta);
        let gradient_norm = dot(&grad, &grad).sqrt();
        let norm = dot(&beta, &beta).sqrt();
        let finish = move |converged: bool, separated: bool, beta: Vec<f64>| BinaryFit {
            coefficients: beta,
            iterations,
            gradient_norm,
            converged,
            separated,
        };
        if norm > cfg.separation_bound {
            return finish(false, true, beta);
        }
        if gradient_norm <= cfg.tolerance {
            return finish(true, false, beta);
        }
        if iterations >= cfg.max_iter {
            return finish(false, false, beta);
        }
        let Some(step) = solve(info, &grad, cfg.ridge) else {
            return finish(false, false, beta);
        };
        iterations += 1;
        // Near the optimum the gain of a Newton step falls below the rounding
        // error of the summed likelihood; allow for that so the step is taken.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let ll_c = log_likelihood(x, y, w, link, &cand);
            if ll_c >= ll - slack {
                beta = cand;
                ll = ll_c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Numerically flat: no step improves the likelihood.
            return finish(false, false, beta);
        }
    }
}
