//! Training protocol: oversampling, stratified splits, k-fold CV, grid
//! search, holdout metrics and forest feature importance.

use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    to_matrix, train_matrix, Label, LabeledSample, ModelFamily, ModelSpec, ModelState, TrainedModel,
};
use crate::error::{Error, Result};
use crate::features::{Feature, NUM_FEATURES};

/// Two-class confusion counts indexed `[actual][predicted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    pub fn add(&mut self, actual: Label, predicted: Label) {
        self.0[actual.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for a in 0..2 {
            for p in 0..2 {
                self.0[a][p] += other.0[a][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn get(&self, actual: Label, predicted: Label) -> u64 {
        self.0[actual.index()][predicted.index()]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub benign_accuracy: f64,
    pub hijack_accuracy: f64,
    pub confusion: Confusion,
}

impl Metrics {
    /// Macro averages over the two classes. Zero denominators count as 0.
    pub fn from_confusion(c: Confusion) -> Self {
        let mut p = [0.0; 2];
        let mut r = [0.0; 2];
        let mut f = [0.0; 2];
        for k in 0..2 {
            let tp = c.0[k][k];
            let predicted = c.0[0][k] + c.0[1][k];
            let actual = c.0[k][0] + c.0[k][1];
            p[k] = ratio(tp, predicted);
            r[k] = ratio(tp, actual);
            f[k] = if p[k] + r[k] > 0.0 {
                2.0 * p[k] * r[k] / (p[k] + r[k])
            } else {
                0.0
            };
        }
        Metrics {
            macro_precision: (p[0] + p[1]) / 2.0,
            macro_recall: (r[0] + r[1]) / 2.0,
            macro_f1: (f[0] + f[1]) / 2.0,
            benign_accuracy: r[0],
            hijack_accuracy: r[1],
            confusion: c,
        }
    }
}

fn class_indices(samples: &[LabeledSample]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, s) in samples.iter().enumerate() {
        out[s.label.index()].push(i);
    }
    out
}

/// Duplicates random minority-class samples, drawn with replacement, until
/// that class holds `target_count`. Originals keep their order and the
/// copies are appended.
pub fn oversample(
    samples: &[LabeledSample],
    target_count: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let classes = class_indices(samples);
    for (c, label) in classes.iter().zip(Label::ALL) {
        if c.is_empty() {
            return Err(Error::EmptyClass(label.as_str()));
        }
    }
    let minority = if classes[1].len() <= classes[0].len() {
        1
    } else {
        0
    };
    let have = classes[minority].len();
    if target_count < have {
        return Err(Error::InvalidArgument(format!(
            "target {target_count} is below the minority count {have}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for _ in have..target_count {
        let pick = classes[minority][rng.gen_range(0..have)];
        out.push(samples[pick].clone());
    }
    Ok(out)
}

/// Stratified shuffle split. The training side gets `round(ratio * n)`
/// samples, shared out per class by largest remainder so each class is
/// within one sample of its exact share.
pub fn split(
    samples: &[LabeledSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let classes = class_indices(samples);
    let exact: Vec<f64> = classes.iter().map(|c| ratio * c.len() as f64).collect();
    let mut cuts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let target = (ratio * samples.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|a, b| (exact[*b] - cuts[*b] as f64).total_cmp(&(exact[*a] - cuts[*a] as f64)));
    let mut missing = target.saturating_sub(cuts.iter().sum());
    for c in order {
        if missing == 0 {
            break;
        }
        if cuts[c] < classes[c].len() {
            cuts[c] += 1;
            missing -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (mut idx, cut) in classes.into_iter().zip(cuts) {
        idx.shuffle(&mut rng);
        train.extend(idx[..cut].iter().map(|&i| samples[i].clone()));
        test.extend(idx[cut..].iter().map(|&i| samples[i].clone()));
    }
    Ok((train, test))
}

/// Fold number per sample. Each class is shuffled, the class lists are
/// concatenated, and fold = position mod k, so fold sizes differ by at
/// most one and every fold is stratified.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut classes = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        classes[l.index()].push(i);
    }
    let min_class = classes[0].len().min(classes[1].len());
    if k < 2 || k > min_class {
        return Err(Error::TooFewSamples {
            folds: k,
            min_class,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut pos = 0;
    for mut c in classes {
        c.shuffle(&mut rng);
        for i in c {
            fold[i] = pos % k;
            pos += 1;
        }
    }
    Ok(fold)
}

/// k-fold cross-validation with metrics taken over the pooled confusion
/// counts of all folds.
pub fn cross_validate(
    spec: &ModelSpec,
    samples: &[LabeledSample],
    k: usize,
    seed: u64,
) -> Result<Metrics> {
    spec.validate()?;
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let (x, y) = to_matrix(samples);
    let per_fold: Vec<Result<Confusion>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (mut tx, mut ty) = (Vec::new(), Vec::new());
            for i in 0..x.len() {
                if folds[i] != f {
                    tx.push(x[i]);
                    ty.push(y[i]);
                }
            }
            let model = train_matrix(spec, &tx, &ty)?;
            let mut c = Confusion::default();
            for i in (0..x.len()).filter(|i| folds[*i] == f) {
                c.add(labels[i], model.predict_row(&x[i]).label);
            }
            Ok(c)
        })
        .collect();
    let mut pooled = Confusion::default();
    for c in per_fold {
        pooled.merge(&c?);
    }
    Ok(Metrics::from_confusion(pooled))
}

/// The search grid for a family: depth 3..=19 and leaf 2..=20 in steps of
/// two for trees, k = 1..=19 odd for KNN, one point for NB.
pub fn grid(family: ModelFamily, seed: u64) -> Vec<ModelSpec> {
    let depths = (3..=20).step_by(2);
    let leaves = || (2..=20).step_by(2);
    match family {
        ModelFamily::Dt => depths
            .flat_map(|d| leaves().map(move |l| ModelSpec::dt(d, l, seed)))
            .collect(),
        ModelFamily::Rf => depths
            .flat_map(|d| leaves().map(move |l| ModelSpec::rf(d, l, seed)))
            .collect(),
        ModelFamily::Knn => (1..=20)
            .step_by(2)
            .map(|k| ModelSpec::knn(k, seed))
            .collect(),
        ModelFamily::Nb => vec![ModelSpec::nb(super::DEFAULT_VAR_SMOOTHING, seed)],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub spec: ModelSpec,
    pub metrics: Metrics,
}

/// Preference among equally scoring points: shallower, then larger leaves,
/// then fewer neighbours.
fn regularization_key(spec: &ModelSpec) -> (usize, Reverse<usize>, usize) {
    (
        spec.max_depth().unwrap_or(0),
        Reverse(spec.min_samples_leaf().unwrap_or(0)),
        spec.n_neighbors().unwrap_or(0),
    )
}

/// Scores every point with `k`-fold CV and returns the winner plus all
/// scored points in input order.
pub fn grid_search_points(
    points: &[ModelSpec],
    samples: &[LabeledSample],
    k: usize,
    seed: u64,
) -> Result<(GridPoint, Vec<GridPoint>)> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let scored: Vec<GridPoint> = points
        .par_iter()
        .map(|spec| {
            cross_validate(spec, samples, k, seed).map(|metrics| GridPoint {
                spec: *spec,
                metrics,
            })
        })
        .collect::<Result<_>>()?;
    let best = scored
        .iter()
        .copied()
        .reduce(|best, p| {
            let better = p.metrics.macro_f1 > best.metrics.macro_f1
                || (p.metrics.macro_f1 == best.metrics.macro_f1
                    && regularization_key(&p.spec) < regularization_key(&best.spec));
            if better {
                p
            } else {
                best
            }
        })
        .expect("non-empty grid");
    Ok((best, scored))
}

/// Exhaustive 10-fold grid search over the family's grid.
pub fn grid_search(family: ModelFamily, samples: &[LabeledSample], seed: u64) -> Result<GridPoint> {
    grid_search_points(&grid(family, seed), samples, 10, seed).map(|(best, _)| best)
}

pub fn evaluate_holdout(model: &TrainedModel, samples: &[LabeledSample]) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty holdout set".into()));
    }
    let mut c = Confusion::default();
    for s in samples {
        c.add(s.label, model.predict(&s.features).label);
    }
    Ok(Metrics::from_confusion(c))
}

/// Normalized per-feature importance scores, in feature order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance([f64; NUM_FEATURES]);

impl Importance {
    /// Accepts non-negative scores summing to 1 within 1e-9.
    pub fn from_values(v: [f64; NUM_FEATURES]) -> Result<Self> {
        let sum: f64 = v.iter().sum();
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "importance scores {v:?} do not sum to 1"
            )));
        }
        Ok(Importance(v))
    }

    pub fn uniform() -> Self {
        Importance([1.0 / NUM_FEATURES as f64; NUM_FEATURES])
    }

    pub fn values(&self) -> [f64; NUM_FEATURES] {
        self.0
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    /// Features sorted by descending score.
    pub fn ranked(&self) -> Vec<(Feature, f64)> {
        let mut v: Vec<(Feature, f64)> = Feature::ALL.iter().map(|f| (*f, self.get(*f))).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

pub fn feature_importance(model: &TrainedModel) -> Result<Importance> {
    match &model.state {
        ModelState::Forest(f) => Ok(Importance(f.importance())),
        _ => Err(Error::NotAForest),
    }
}
