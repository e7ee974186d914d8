//! Benign-conflict vs hijack classification: four model families, the
//! training protocol around them, and model persistence.

mod bayes;
mod eval;
mod forest;
mod knn;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bayes::GaussianNb;
pub use eval::{
    cross_validate, evaluate_holdout, feature_importance, grid, grid_search, grid_search_points,
    oversample, split, stratified_folds, Confusion, GridPoint, Importance, Metrics,
};
pub use forest::{ForestParams, RandomForest};
pub use knn::Knn;
pub use tree::{DecisionTree, Node, TreeParams};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, NUM_FEATURES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    BenignConflict,
    Hijack,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::BenignConflict, Label::Hijack];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::BenignConflict => "benign",
            Label::Hijack => "hijack",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" | "benign_conflict" | "0" => Ok(Label::BenignConflict),
            "hijack" | "1" => Ok(Label::Hijack),
            _ => Err(Error::InvalidArgument(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(values: [f64; NUM_FEATURES], label: Label) -> Self {
        LabeledSample {
            features: FeatureVector::from_values(values),
            label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Dt,
    Rf,
    Knn,
    Nb,
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ModelFamily::Dt),
            "rf" => Ok(ModelFamily::Rf),
            "knn" => Ok(ModelFamily::Knn),
            "nb" => Ok(ModelFamily::Nb),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model family {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyperparams {
    Dt {
        max_depth: usize,
        min_samples_leaf: usize,
    },
    Rf {
        max_depth: usize,
        min_samples_leaf: usize,
        n_trees: usize,
        max_features: usize,
        bootstrap: bool,
    },
    Knn {
        n_neighbors: usize,
    },
    Nb {
        var_smoothing: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

pub const DEFAULT_TREES: usize = 100;
/// ⌈√7⌉ features per split.
pub const DEFAULT_MAX_FEATURES: usize = 3;
pub const DEFAULT_VAR_SMOOTHING: f64 = 1e-9;

impl ModelSpec {
    pub fn dt(max_depth: usize, min_samples_leaf: usize, seed: u64) -> Self {
        ModelSpec {
            params: Hyperparams::Dt {
                max_depth,
                min_samples_leaf,
            },
            seed,
        }
    }

    pub fn rf(max_depth: usize, min_samples_leaf: usize, seed: u64) -> Self {
        ModelSpec {
            params: Hyperparams::Rf {
                max_depth,
                min_samples_leaf,
                n_trees: DEFAULT_TREES,
                max_features: DEFAULT_MAX_FEATURES,
                bootstrap: true,
            },
            seed,
        }
    }

    pub fn knn(n_neighbors: usize, seed: u64) -> Self {
        ModelSpec {
            params: Hyperparams::Knn { n_neighbors },
            seed,
        }
    }

    pub fn nb(var_smoothing: f64, seed: u64) -> Self {
        ModelSpec {
            params: Hyperparams::Nb { var_smoothing },
            seed,
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self.params {
            Hyperparams::Dt { .. } => ModelFamily::Dt,
            Hyperparams::Rf { .. } => ModelFamily::Rf,
            Hyperparams::Knn { .. } => ModelFamily::Knn,
            Hyperparams::Nb { .. } => ModelFamily::Nb,
        }
    }

    pub fn max_depth(&self) -> Option<usize> {
        match self.params {
            Hyperparams::Dt { max_depth, .. } | Hyperparams::Rf { max_depth, .. } => {
                Some(max_depth)
            }
            _ => None,
        }
    }

    pub fn min_samples_leaf(&self) -> Option<usize> {
        match self.params {
            Hyperparams::Dt {
                min_samples_leaf, ..
            }
            | Hyperparams::Rf {
                min_samples_leaf, ..
            } => Some(min_samples_leaf),
            _ => None,
        }
    }

    pub fn n_neighbors(&self) -> Option<usize> {
        match self.params {
            Hyperparams::Knn { n_neighbors } => Some(n_neighbors),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = match self.params {
            Hyperparams::Dt {
                max_depth,
                min_samples_leaf,
            } => max_depth == 0 || min_samples_leaf == 0,
            Hyperparams::Rf {
                max_depth,
                min_samples_leaf,
                n_trees,
                max_features,
                ..
            } => {
                max_depth == 0
                    || min_samples_leaf == 0
                    || n_trees == 0
                    || max_features == 0
                    || max_features > NUM_FEATURES
            }
            Hyperparams::Knn { n_neighbors } => n_neighbors == 0,
            Hyperparams::Nb { var_smoothing } => {
                !(var_smoothing >= 0.0 && var_smoothing.is_finite())
            }
        };
        if bad {
            return Err(Error::InvalidArgument(format!(
                "bad hyperparameters {:?}",
                self.params
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelState {
    Tree(DecisionTree),
    Forest(RandomForest),
    Knn(Knn),
    Nb(GaussianNb),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Hijack score in [0, 1]; at or above one half means hijack.
    pub score: f64,
}

impl Prediction {
    fn from_score(score: f64) -> Self {
        let label = if score >= 0.5 {
            Label::Hijack
        } else {
            Label::BenignConflict
        };
        Prediction { label, score }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub state: ModelState,
    /// SHA-256 over the training rows and labels.
    pub fingerprint: String,
}

pub(crate) fn to_matrix(samples: &[LabeledSample]) -> (Vec<[f64; NUM_FEATURES]>, Vec<u8>) {
    samples
        .iter()
        .map(|s| (s.features.values(), s.label.index() as u8))
        .unzip()
}

pub fn training_fingerprint(samples: &[LabeledSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        for v in s.features.values() {
            h.update(v.to_le_bytes());
        }
        h.update([s.label.index() as u8]);
    }
    hex::encode(h.finalize())
}

/// Fits a model. Both classes must be present.
pub fn train(spec: &ModelSpec, samples: &[LabeledSample]) -> Result<TrainedModel> {
    spec.validate()?;
    let (x, y) = to_matrix(samples);
    let state = train_matrix(spec, &x, &y)?;
    Ok(TrainedModel {
        spec: *spec,
        state,
        fingerprint: training_fingerprint(samples),
    })
}

pub(crate) fn train_matrix(
    spec: &ModelSpec,
    x: &[[f64; NUM_FEATURES]],
    y: &[u8],
) -> Result<ModelState> {
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::SingleClass);
    }
    Ok(match spec.params {
        Hyperparams::Dt {
            max_depth,
            min_samples_leaf,
        } => ModelState::Tree(DecisionTree::fit(
            x,
            y,
            (0..x.len() as u32).collect(),
            TreeParams {
                max_depth,
                min_samples_leaf,
                max_features: NUM_FEATURES,
            },
            None,
        )),
        Hyperparams::Rf {
            max_depth,
            min_samples_leaf,
            n_trees,
            max_features,
            bootstrap,
        } => ModelState::Forest(RandomForest::fit(
            x,
            y,
            ForestParams {
                tree: TreeParams {
                    max_depth,
                    min_samples_leaf,
                    max_features,
                },
                n_trees,
                bootstrap,
            },
            spec.seed,
        )),
        Hyperparams::Knn { n_neighbors } => ModelState::Knn(Knn::fit(x, y, n_neighbors)),
        Hyperparams::Nb { var_smoothing } => ModelState::Nb(GaussianNb::fit(x, y, var_smoothing)),
    })
}

impl ModelState {
    pub fn hijack_score(&self, row: &[f64; NUM_FEATURES]) -> f64 {
        match self {
            ModelState::Tree(t) => t.hijack_fraction(row),
            ModelState::Forest(f) => f.hijack_score(row),
            ModelState::Knn(k) => k.hijack_score(row),
            ModelState::Nb(nb) => nb.hijack_score(row),
        }
    }

    pub fn predict_row(&self, row: &[f64; NUM_FEATURES]) -> Prediction {
        Prediction::from_score(self.hijack_score(row))
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    spec: ModelSpec,
    fingerprint: String,
    #[serde(default)]
    importance: Option<[f64; NUM_FEATURES]>,
    state: ModelState,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl TrainedModel {
    pub fn predict(&self, fv: &FeatureVector) -> Prediction {
        self.state.predict_row(&fv.values())
    }

    /// SHA-256 of the serialized learned state.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.state).expect("model state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Serializes the model together with the tightness weights frozen
    /// alongside it.
    pub fn to_json(&self, importance: Option<&Importance>) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            spec: self.spec,
            fingerprint: self.fingerprint.clone(),
            importance: importance.map(|i| i.values()),
            state: self.state.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<(TrainedModel, Option<Importance>)> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: probe.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        let importance = file.importance.map(Importance::from_values).transpose()?;
        Ok((
            TrainedModel {
                spec: file.spec,
                state: file.state,
                fingerprint: file.fingerprint,
            },
            importance,
        ))
    }

    pub fn save(&self, path: &Path, importance: Option<&Importance>) -> Result<()> {
        crate::ingest::write_atomic(path, self.to_json(importance)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(TrainedModel, Option<Importance>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let hijack = i % 2 == 1;
                let mut v = [0.0; NUM_FEATURES];
                for x in v.iter_mut() {
                    *x = rng.gen::<f64>();
                }
                v[1] = if hijack { 0.0 } else { 1.0 };
                v[6] = if hijack {
                    0.6 + 0.4 * rng.gen::<f64>()
                } else {
                    0.4 * rng.gen::<f64>()
                };
                LabeledSample::new(
                    v,
                    if hijack {
                        Label::Hijack
                    } else {
                        Label::BenignConflict
                    },
                )
            })
            .collect()
    }

    #[test]
    fn one_class_rejected() {
        let s = vec![LabeledSample::new([0.0; 7], Label::Hijack); 4];
        for spec in [
            ModelSpec::dt(3, 1, 0),
            ModelSpec::rf(3, 1, 0),
            ModelSpec::knn(1, 0),
            ModelSpec::nb(1e-9, 0),
        ] {
            assert!(matches!(train(&spec, &s), Err(Error::SingleClass)));
        }
    }

    #[test]
    fn rf_single_tree_matches_dt() {
        let data = blobs(300, 3);
        let dt = train(&ModelSpec::dt(7, 2, 11), &data).unwrap();
        let rf = train(
            &ModelSpec {
                params: Hyperparams::Rf {
                    max_depth: 7,
                    min_samples_leaf: 2,
                    n_trees: 1,
                    max_features: NUM_FEATURES,
                    bootstrap: false,
                },
                seed: 11,
            },
            &data,
        )
        .unwrap();
        for s in blobs(200, 4) {
            assert_eq!(dt.predict(&s.features).label, rf.predict(&s.features).label);
        }
    }

    #[test]
    fn rf_scores_are_vote_fractions() {
        let data = blobs(200, 5);
        let rf = train(&ModelSpec::rf(5, 2, 1), &data).unwrap();
        for s in blobs(50, 6) {
            let score = rf.predict(&s.features).score;
            let votes = score * DEFAULT_TREES as f64;
            assert!((votes - votes.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn knn_one_recovers_training_labels() {
        let data = blobs(200, 7);
        let m = train(&ModelSpec::knn(1, 0), &data).unwrap();
        for s in &data {
            assert_eq!(m.predict(&s.features).label, s.label);
        }
    }

    #[test]
    fn nb_boundary_near_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = |rng: &mut ChaCha8Rng| {
            // Box-Muller
            let (u1, u2): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut data = Vec::new();
        for i in 0..4000 {
            let hijack = i % 2 == 0;
            let mu = if hijack { 0.7 } else { 0.3 };
            let mut v = [0.0; NUM_FEATURES];
            v[4] = mu + 0.05 * normal(&mut rng);
            data.push(LabeledSample::new(
                v,
                if hijack {
                    Label::Hijack
                } else {
                    Label::BenignConflict
                },
            ));
        }
        let m = train(&ModelSpec::nb(1e-9, 0), &data).unwrap();
        let mut boundary = None;
        for step in 0..=1000 {
            let mut v = [0.0; NUM_FEATURES];
            v[4] = f64::from(step) / 1000.0;
            if m.predict(&FeatureVector::from_values(v)).label == Label::Hijack {
                boundary = Some(v[4]);
                break;
            }
        }
        assert!((boundary.unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn persistence_round_trip_and_version_check() {
        let data = blobs(100, 1);
        let m = train(&ModelSpec::rf(5, 2, 3), &data).unwrap();
        let imp = feature_importance(&m).unwrap();
        let text = m.to_json(Some(&imp)).unwrap();
        let (back, imp2) = TrainedModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.state_hash(), m.state_hash());
        assert_eq!(imp2.unwrap(), imp);
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            TrainedModel::from_json(&bumped),
            Err(Error::ModelVersion { found: 2, .. })
        ));
    }

    #[test]
    fn deterministic_training() {
        let data = blobs(200, 2);
        let a = train(&ModelSpec::rf(9, 2, 42), &data).unwrap();
        let b = train(&ModelSpec::rf(9, 2, 42), &data).unwrap();
        assert_eq!(a.state_hash(), b.state_hash());
        let c = train(&ModelSpec::rf(9, 2, 43), &data).unwrap();
        assert_ne!(a.state_hash(), c.state_hash());
    }
}
