use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tree::Row;
use crate::features::NUM_FEATURES;

/// Gaussian naive Bayes. Every variance gets `var_smoothing` times the
/// largest per-feature variance added, as scikit-learn does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [[f64; NUM_FEATURES]; 2],
    var: [[f64; NUM_FEATURES]; 2],
}

fn moments(rows: &[&Row]) -> ([f64; NUM_FEATURES], [f64; NUM_FEATURES]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; NUM_FEATURES];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut var = [0.0; NUM_FEATURES];
    for r in rows {
        for j in 0..NUM_FEATURES {
            var[j] += (r[j] - mean[j]).powi(2) / n;
        }
    }
    (mean, var)
}

impl GaussianNb {
    /// Both classes must be present.
    pub(crate) fn fit(x: &[Row], y: &[u8], var_smoothing: f64) -> Self {
        let all: Vec<&Row> = x.iter().collect();
        let (_, total_var) = moments(&all);
        let max_var = total_var.iter().copied().fold(0.0, f64::max);
        let eps = var_smoothing * if max_var > 0.0 { max_var } else { 1.0 };
        let mut log_prior = [0.0; 2];
        let mut mean = [[0.0; NUM_FEATURES]; 2];
        let mut var = [[0.0; NUM_FEATURES]; 2];
        for c in 0..2u8 {
            let rows: Vec<&Row> = x
                .iter()
                .zip(y)
                .filter(|(_, l)| **l == c)
                .map(|(r, _)| r)
                .collect();
            let (m, v) = moments(&rows);
            let c = c as usize;
            log_prior[c] = (rows.len() as f64 / x.len() as f64).ln();
            mean[c] = m;
            var[c] = v.map(|v| (v + eps).max(f64::MIN_POSITIVE));
        }
        GaussianNb {
            log_prior,
            mean,
            var,
        }
    }

    fn log_joint(&self, c: usize, row: &Row) -> f64 {
        let mut lj = self.log_prior[c];
        for ((x, m), v) in row.iter().zip(&self.mean[c]).zip(&self.var[c]) {
            lj -= 0.5 * (2.0 * PI * v).ln() + (x - m).powi(2) / (2.0 * v);
        }
        lj
    }

    /// Posterior probability of the hijack class.
    pub fn hijack_score(&self, row: &Row) -> f64 {
        let (b, h) = (self.log_joint(0, row), self.log_joint(1, row));
        // logistic of the log-odds, stable for large magnitudes
        let d = b - h;
        if d >= 0.0 {
            let e = (-d).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + d.exp())
        }
    }
}
