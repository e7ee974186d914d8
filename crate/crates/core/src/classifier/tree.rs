//! CART decision trees with Gini impurity.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::NUM_FEATURES;

pub(crate) type Row = [f64; NUM_FEATURES];

/// Growth limits for one tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `NUM_FEATURES` disables sub-sampling.
    pub max_features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: [u32; 2],
    },
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
        counts: [u32; 2],
    },
}

impl Node {
    pub fn counts(&self) -> [u32; 2] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

fn gini(c: [u32; 2]) -> f64 {
    let n = f64::from(c[0] + c[1]);
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (f64::from(c[0]) / n, f64::from(c[1]) / n);
    1.0 - a * a - b * b
}

/// `n * gini` without the division, used to compare candidate splits.
fn weighted_gini(c: [u32; 2]) -> f64 {
    let n = f64::from(c[0] + c[1]);
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (f64::from(c[0]), f64::from(c[1]));
    n - (a * a + b * b) / n
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: &'a [Row],
    y: &'a [u8],
    params: TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
    scratch: Vec<(f64, u8)>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[u32]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &i in idx {
            c[self.y[i as usize] as usize] += 1;
        }
        c
    }

    fn feature_order(&mut self) -> [usize; NUM_FEATURES] {
        let mut order: [usize; NUM_FEATURES] = std::array::from_fn(|i| i);
        if self.params.max_features < NUM_FEATURES {
            if let Some(rng) = self.rng.as_deref_mut() {
                order.shuffle(rng);
            }
        }
        order
    }

    fn best_split(&mut self, idx: &[u32]) -> Option<Best> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len();
        let mut best: Option<Best> = None;
        let mut examined = 0;
        for f in self.feature_order() {
            if examined >= self.params.max_features {
                break;
            }
            self.scratch.clear();
            self.scratch.extend(
                idx.iter()
                    .map(|&i| (self.x[i as usize][f], self.y[i as usize])),
            );
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut total = [0u32; 2];
            for s in &self.scratch {
                total[s.1 as usize] += 1;
            }
            let mut left = [0u32; 2];
            for pos in 0..n - 1 {
                left[self.scratch[pos].1 as usize] += 1;
                let (v, next) = (self.scratch[pos].0, self.scratch[pos + 1].0);
                if v == next {
                    continue;
                }
                let nl = pos + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = weighted_gini(left) + weighted_gini(right);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [u32], depth: usize) -> u32 {
        let counts = self.counts(idx);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure
            || depth >= self.params.max_depth
            || idx.len() < 2 * self.params.min_samples_leaf.max(1)
        {
            return id;
        }
        let Some(best) = self.best_split(idx) else {
            return id;
        };
        let mut split = 0;
        for i in 0..idx.len() {
            if self.x[idx[i] as usize][best.feature] <= best.threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u8,
            threshold: best.threshold,
            left,
            right,
            counts,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree over the rows named by `idx` (repeats allowed, as in a
    /// bootstrap sample). `rng` drives feature sub-sampling only.
    pub(crate) fn fit(
        x: &[Row],
        y: &[u8],
        mut idx: Vec<u32>,
        params: TreeParams,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(idx.len()),
        };
        if !idx.is_empty() {
            b.grow(&mut idx, 0);
        } else {
            b.nodes.push(Node::Leaf { counts: [0, 0] });
        }
        DecisionTree { nodes: b.nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Class counts of the leaf `row` lands in.
    pub fn leaf_counts(&self, row: &Row) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Fraction of hijack samples in the leaf.
    pub fn hijack_fraction(&self, row: &Row) -> f64 {
        let c = self.leaf_counts(row);
        let n = c[0] + c[1];
        if n == 0 {
            return 1.0;
        }
        f64::from(c[1]) / f64::from(n)
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = [u32; 2]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(*counts),
            Node::Split { .. } => None,
        })
    }

    /// Total Gini decrease per feature, weighted by the fraction of samples
    /// reaching each split. Not normalized.
    pub fn impurity_decrease(&self) -> [f64; NUM_FEATURES] {
        let mut out = [0.0; NUM_FEATURES];
        let root = self.nodes[0].counts();
        let n_root = f64::from(root[0] + root[1]);
        if n_root == 0.0 {
            return out;
        }
        for node in &self.nodes {
            if let Node::Split {
                feature,
                left,
                right,
                counts,
                ..
            } = node
            {
                let l = self.nodes[*left as usize].counts();
                let r = self.nodes[*right as usize].counts();
                let n = |c: [u32; 2]| f64::from(c[0] + c[1]);
                let dec = n(*counts) * gini(*counts) - n(l) * gini(l) - n(r) * gini(r);
                out[*feature as usize] += dec / n_root;
            }
        }
        out
    }
}
