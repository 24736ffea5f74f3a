//! Interpretable model families: depth-limited trees and integer scoring systems.

mod card;
pub mod scoring;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scoring::{FeaturePoints, ScoringSystemModel};
pub use tree::{DecisionTreeModel, TreeNode, TreeParams};

use crate::featurize::{FeatureSchema, FeatureVector, SCHEMA_VERSION};
use crate::labeling::{build_dataset, events_for_type, extract_labeling_events, Dataset, LabeledExample, LabelingEvent};
use crate::model::{AssetType, ModelError, Store};
use crate::time::{Timestamp, DAY};

pub const DEFAULT_WINDOW_DAYS: i64 = 180;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("no training examples")]
    EmptyTrainingSet,
    #[error("no test examples")]
    EmptyTestSet,
    #[error("feature schema mismatch: model expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("all features are constant")]
    DegenerateFeatures,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("model card line {line}: {reason}")]
    InvalidCard { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub train_accuracy: Option<f64>,
    pub train_auc: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Tree(DecisionTreeModel),
    Scoring(ScoringSystemModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: ModelKind,
    pub metrics: TrainingMetrics,
    pub dropped_features: Vec<String>,
}

impl TrainedModel {
    pub fn asset_type(&self) -> AssetType {
        match &self.model {
            ModelKind::Tree(t) => t.asset_type,
            ModelKind::Scoring(s) => s.asset_type,
        }
    }

    pub fn schema_version(&self) -> u32 {
        match &self.model {
            ModelKind::Tree(t) => t.schema_version,
            ModelKind::Scoring(s) => s.schema_version,
        }
    }

    pub fn trained_at(&self) -> Timestamp {
        match &self.model {
            ModelKind::Tree(t) => t.trained_at,
            ModelKind::Scoring(s) => s.trained_at,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.model {
            ModelKind::Tree(_) => "tree",
            ModelKind::Scoring(_) => "scoring",
        }
    }

    pub fn schema(&self) -> &'static FeatureSchema {
        FeatureSchema::for_type(self.asset_type())
    }

    /// Score for a row already known to match the schema.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.model {
            ModelKind::Tree(t) => t.predict_row(row),
            ModelKind::Scoring(s) => s.predict_row(row),
        }
    }

    pub fn predicts_positive(&self, row: &[f64]) -> bool {
        match &self.model {
            ModelKind::Tree(t) => t.predict_row(row) >= 0.5,
            ModelKind::Scoring(s) => s.predicts_positive(row),
        }
    }

    pub fn check_schema(&self, features: &FeatureVector) -> Result<(), LearnError> {
        if features.asset_type != self.asset_type()
            || features.schema_version != self.schema_version()
            || features.values.len() != self.schema().len()
        {
            return Err(LearnError::SchemaMismatch {
                expected: format!("{} v{}", self.asset_type(), self.schema_version()),
                found: format!("{} v{}", features.asset_type, features.schema_version),
            });
        }
        Ok(())
    }

    /// Versioned text form; also the human-readable model card.
    pub fn to_card(&self) -> String {
        card::render(self)
    }

    pub fn from_card(text: &str) -> Result<Self, LearnError> {
        card::parse(text)
    }
}

/// Suitability score in [0, 1].
pub fn predict(model: &TrainedModel, features: &FeatureVector) -> Result<f64, LearnError> {
    model.check_schema(features)?;
    Ok(model.predict_row(&features.values))
}

/// A model as stored in the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecordWire", into = "ModelRecordWire")]
pub struct ModelRecord {
    pub model_id: String,
    pub trained_at: Timestamp,
    pub model: TrainedModel,
}

#[derive(Serialize, Deserialize)]
struct ModelRecordWire {
    model_id: String,
    trained_at: Timestamp,
    card: String,
}

impl From<ModelRecord> for ModelRecordWire {
    fn from(r: ModelRecord) -> Self {
        Self {
            model_id: r.model_id,
            trained_at: r.trained_at,
            card: r.model.to_card(),
        }
    }
}

impl TryFrom<ModelRecordWire> for ModelRecord {
    type Error = LearnError;

    fn try_from(w: ModelRecordWire) -> Result<Self, Self::Error> {
        Ok(Self {
            model_id: w.model_id,
            trained_at: w.trained_at,
            model: TrainedModel::from_card(&w.card)?,
        })
    }
}

fn check_examples(examples: &[LabeledExample]) -> Result<AssetType, LearnError> {
    let first = examples.first().ok_or(LearnError::EmptyTrainingSet)?;
    let t = first.features.asset_type;
    let len = FeatureSchema::for_type(t).len();
    for ex in examples {
        let f = &ex.features;
        if f.asset_type != t || f.schema_version != SCHEMA_VERSION || f.values.len() != len {
            return Err(LearnError::SchemaMismatch {
                expected: format!("{t} v{SCHEMA_VERSION}"),
                found: format!("{} v{}", f.asset_type, f.schema_version),
            });
        }
    }
    Ok(t)
}

fn rows_and_labels(examples: &[LabeledExample]) -> (Vec<&[f64]>, Vec<bool>) {
    (
        examples.iter().map(|e| e.features.values.as_slice()).collect(),
        examples.iter().map(|e| e.label.is_positive()).collect(),
    )
}

pub fn train_tree(
    train: &[LabeledExample],
    params: &TreeParams,
    trained_at: Timestamp,
) -> Result<DecisionTreeModel, LearnError> {
    let asset_type = check_examples(train)?;
    let (rows, labels) = rows_and_labels(train);
    let nodes = tree::fit_nodes(&rows, &labels, params)?;
    Ok(DecisionTreeModel {
        nodes,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        asset_type,
        schema_version: SCHEMA_VERSION,
        trained_at,
        seed: params.seed,
    })
}

/// Returns the model and the names of the features removed by the correlation filter.
pub fn train_scoring_system(
    train: &[LabeledExample],
    weight_bound: i32,
    seed: u64,
    trained_at: Timestamp,
) -> Result<(ScoringSystemModel, Vec<String>), LearnError> {
    let asset_type = check_examples(train)?;
    let (rows, labels) = rows_and_labels(train);
    let (features, intercept, dropped) = scoring::fit_scoring(&rows, &labels, weight_bound)?;
    let schema = FeatureSchema::for_type(asset_type);
    let dropped = dropped
        .into_iter()
        .map(|i| schema.features[i].name.to_string())
        .collect();
    Ok((
        ScoringSystemModel {
            features,
            intercept,
            weight_bound,
            asset_type,
            schema_version: SCHEMA_VERSION,
            trained_at,
            seed,
        },
        dropped,
    ))
}

/// Fraction of examples whose predicted class matches the label.
pub fn accuracy(model: &TrainedModel, examples: &[LabeledExample]) -> Option<f64> {
    if examples.is_empty() {
        return None;
    }
    let correct = examples
        .iter()
        .filter(|e| model.predicts_positive(&e.features.values) == e.label.is_positive())
        .count();
    Some(correct as f64 / examples.len() as f64)
}

/// Area under the ROC curve (ties count half); `None` unless both classes occur.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let mut v: Vec<(f64, bool)> = scored.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos = v.iter().filter(|x| x.1).count();
    let neg = v.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // Sum of midranks of the positives (Mann-Whitney U).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].0 == v[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * v[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

pub fn model_auc(model: &TrainedModel, examples: &[LabeledExample]) -> Option<f64> {
    let scored: Vec<(f64, bool)> = examples
        .iter()
        .map(|e| (model.predict_row(&e.features.values), e.label.is_positive()))
        .collect();
    auc(&scored)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Tree { max_depth: usize, min_leaf: usize },
    Scoring { weight_bound: i32 },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Tree {
            max_depth: tree::DEFAULT_MAX_DEPTH,
            min_leaf: tree::DEFAULT_MIN_LEAF,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub asset_type: AssetType,
    pub spec: ModelSpec,
    pub seed: u64,
    /// Temporal train fraction; `None` trains on every example.
    pub split_fraction: Option<f64>,
}

impl TrainConfig {
    pub fn tree(asset_type: AssetType) -> Self {
        Self {
            asset_type,
            spec: ModelSpec::default(),
            seed: 0,
            split_fraction: None,
        }
    }
}

/// Fits a model on already-built examples and fills in metrics.
pub fn fit(
    train: &[LabeledExample],
    test: &[LabeledExample],
    config: &TrainConfig,
    trained_at: Timestamp,
) -> Result<TrainedModel, LearnError> {
    if train.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    let (model, dropped_features) = match config.spec {
        ModelSpec::Tree {
            max_depth,
            min_leaf,
        } => {
            let params = TreeParams {
                max_depth,
                min_leaf,
                seed: config.seed,
            };
            (ModelKind::Tree(train_tree(train, &params, trained_at)?), Vec::new())
        }
        ModelSpec::Scoring { weight_bound } => {
            let (m, dropped) = train_scoring_system(train, weight_bound, config.seed, trained_at)?;
            (ModelKind::Scoring(m), dropped)
        }
    };
    let mut trained = TrainedModel {
        model,
        metrics: TrainingMetrics::default(),
        dropped_features,
    };
    trained.metrics = TrainingMetrics {
        train_accuracy: accuracy(&trained, train),
        train_auc: model_auc(&trained, train),
        test_accuracy: accuracy(&trained, test),
        test_auc: model_auc(&trained, test),
    };
    Ok(trained)
}

/// Builds the dataset for `config.asset_type` from `events` and trains on it.
pub fn train_from_events(
    store: &Store,
    events: &[LabelingEvent],
    config: &TrainConfig,
    trained_at: Timestamp,
) -> Result<(TrainedModel, Dataset), LearnError> {
    let events = events_for_type(store, events, config.asset_type);
    let dataset = build_dataset(store, &events, config.split_fraction, config.seed)?;
    let model = fit(&dataset.train, &dataset.test, config, trained_at)?;
    Ok((model, dataset))
}

/// Trains on labeling events in `[now - window_days, now)`; the model is stamped `now`.
pub fn retrain_windowed(
    store: &Store,
    window_days: i64,
    now: Timestamp,
    config: &TrainConfig,
) -> Result<(TrainedModel, Dataset), LearnError> {
    if window_days <= 0 {
        return Err(LearnError::InvalidParameter(format!(
            "window of {window_days} days"
        )));
    }
    let events = extract_labeling_events(store, now - window_days * DAY, now);
    train_from_events(store, &events, config, now)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_of_perfect_and_tied_scores() {
        assert_eq!(auc(&[(0.1, false), (0.9, true)]), Some(1.0));
        assert_eq!(auc(&[(0.5, false), (0.5, true)]), Some(0.5));
        assert_eq!(auc(&[(0.9, false), (0.1, true)]), Some(0.0));
        assert_eq!(auc(&[(0.9, true)]), None);
    }

    #[test]
    fn auc_matches_pair_count() {
        let s = [(0.2, true), (0.3, false), (0.3, true), (0.7, false), (0.9, true)];
        let mut num = 0.0;
        let mut den = 0.0;
        for a in s.iter().filter(|x| x.1) {
            for b in s.iter().filter(|x| !x.1) {
                den += 1.0;
                num += if a.0 > b.0 {
                    1.0
                } else if a.0 == b.0 {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert_eq!(auc(&s), Some(num / den));
    }

    #[test]
    fn single_leaf_predicts_its_fraction() {
        let model = TrainedModel {
            model: ModelKind::Tree(DecisionTreeModel {
                nodes: vec![TreeNode::Leaf {
                    positive_fraction: 0.7,
                    sample_count: 10,
                }],
                max_depth: 5,
                min_leaf: 20,
                asset_type: AssetType::SourceFile,
                schema_version: SCHEMA_VERSION,
                trained_at: 0,
                seed: 0,
            }),
            metrics: TrainingMetrics::default(),
            dropped_features: vec![],
        };
        let fv = FeatureVector {
            asset_id: "a".into(),
            candidate_id: "c".into(),
            as_of: 1,
            asset_type: AssetType::SourceFile,
            schema_version: SCHEMA_VERSION,
            values: vec![0.0; 7],
        };
        assert_eq!(predict(&model, &fv).unwrap(), 0.7);
        let wrong = FeatureVector {
            asset_type: AssetType::WarehouseTable,
            values: vec![0.0; 8],
            ..fv
        };
        assert!(matches!(
            predict(&model, &wrong),
            Err(LearnError::SchemaMismatch { .. })
        ));
    }
}
