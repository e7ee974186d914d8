use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Row, TreeParams};
use crate::features::NUM_FEATURES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub n_trees: usize,
    pub bootstrap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

pub(crate) fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (tree as u64)
            .wrapping_add(1)
            .wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl RandomForest {
    pub(crate) fn fit(x: &[Row], y: &[u8], params: ForestParams, seed: u64) -> Self {
        let n = x.len();
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
                let idx: Vec<u32> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
                } else {
                    (0..n as u32).collect()
                };
                DecisionTree::fit(x, y, idx, params.tree, Some(&mut rng))
            })
            .collect();
        RandomForest { trees }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Number of trees voting hijack. A tree whose leaf is split evenly
    /// votes hijack.
    pub fn hijack_votes(&self, row: &Row) -> usize {
        self.trees
            .iter()
            .filter(|t| {
                let c = t.leaf_counts(row);
                c[1] >= c[0]
            })
            .count()
    }

    pub fn hijack_score(&self, row: &Row) -> f64 {
        self.hijack_votes(row) as f64 / self.trees.len() as f64
    }

    /// Mean decrease in impurity: per-tree normalized, averaged, then
    /// normalized again.
    pub fn importance(&self) -> [f64; NUM_FEATURES] {
        let mut acc = [0.0; NUM_FEATURES];
        let mut used = 0usize;
        for t in &self.trees {
            let dec = t.impurity_decrease();
            let total: f64 = dec.iter().sum();
            if total > 0.0 {
                used += 1;
                for (a, d) in acc.iter_mut().zip(dec) {
                    *a += d / total;
                }
            }
        }
        if used == 0 {
            return [1.0 / NUM_FEATURES as f64; NUM_FEATURES];
        }
        let total: f64 = acc.iter().sum();
        acc.map(|a| a / total)
    }
}
