use serde::{Deserialize, Serialize};

use super::tree::Row;

/// Brute-force k-nearest-neighbours on Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    x: Vec<Row>,
    y: Vec<u8>,
}

fn dist2(a: &Row, b: &Row) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl Knn {
    pub(crate) fn fit(x: &[Row], y: &[u8], k: usize) -> Self {
        Knn {
            k: k.max(1),
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    /// Fraction of hijacks among the k nearest rows. Equal distances are
    /// broken by training order.
    pub fn hijack_score(&self, row: &Row) -> f64 {
        let mut d: Vec<(f64, usize)> = self.x.iter().map(|r| dist2(r, row)).zip(0..).collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let hijacks = d[..k].iter().filter(|(_, i)| self.y[*i] == 1).count();
        hijacks as f64 / k as f64
    }
}
