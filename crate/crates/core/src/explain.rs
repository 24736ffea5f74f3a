//! Global permutation importance, per-prediction attribution and
//! single-feature counterfactuals.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{FeatureKind, FeatureSchema, FeatureVector};
use crate::labeling::LabeledExample;
use crate::learn::{LearnError, ModelKind, TrainedModel, TreeNode};
use crate::model::{AssetType, CandidateId};

pub const DEFAULT_REPEATS: usize = 10;
pub const RECENCY_MENU: [f64; 5] = [1.0, 2.0, 7.0, 30.0, 90.0];
pub const COUNT_MENU: [f64; 3] = [1.0, 5.0, 20.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean drop in accuracy when the column is shuffled.
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportanceReport {
    pub metric: String,
    pub baseline: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: Vec<FeatureImportance>,
}

fn correct_count(model: &TrainedModel, rows: &[Vec<f64>], labels: &[bool]) -> usize {
    rows.iter()
        .zip(labels)
        .filter(|(r, &y)| model.predicts_positive(r) == y)
        .count()
}

/// Shuffles one column at a time (seeded, schema order, `repeats` times each)
/// and reports the mean and population standard deviation of the accuracy drop.
pub fn permutation_importance(
    model: &TrainedModel,
    test: &[LabeledExample],
    repeats: usize,
    seed: u64,
) -> Result<GlobalImportanceReport, LearnError> {
    if test.is_empty() {
        return Err(LearnError::EmptyTestSet);
    }
    if repeats == 0 {
        return Err(LearnError::InvalidParameter("repeats must be at least 1".into()));
    }
    for ex in test {
        model.check_schema(&ex.features)?;
    }
    let n = test.len();
    let rows: Vec<Vec<f64>> = test.iter().map(|e| e.features.values.clone()).collect();
    let labels: Vec<bool> = test.iter().map(|e| e.label.is_positive()).collect();
    let base_correct = correct_count(model, &rows, &labels);
    let baseline = base_correct as f64 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut work = rows.clone();
    for (j, def) in model.schema().features.iter().enumerate() {
        let mut drops = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            for (i, &p) in perm.iter().enumerate() {
                work[i][j] = rows[p][j];
            }
            let c = correct_count(model, &work, &labels);
            drops.push((base_correct as f64 - c as f64) / n as f64);
        }
        for (w, r) in work.iter_mut().zip(&rows) {
            w[j] = r[j];
        }
        let mean = drops.iter().sum::<f64>() / repeats as f64;
        let var = drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / repeats as f64;
        features.push(FeatureImportance {
            feature: def.name.to_string(),
            mean,
            std_dev: var.sqrt(),
        });
    }
    Ok(GlobalImportanceReport {
        metric: "accuracy".into(),
        baseline,
        repeats,
        seed,
        features,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributionScale {
    /// Tree leaf fractions.
    Probability,
    /// Scoring-system points (before the sigmoid).
    Points,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub value: f64,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionAttribution {
    pub base_value: f64,
    pub contributions: Vec<FeatureContribution>,
    pub final_score: f64,
    pub scale: AttributionScale,
}

impl PredictionAttribution {
    /// `base_value + Σ contributions - final_score`.
    pub fn additivity_error(&self) -> f64 {
        (self.base_value + self.contributions.iter().map(|c| c.contribution).sum::<f64>()
            - self.final_score)
            .abs()
    }
}

/// Splits a prediction into per-feature parts that sum to the score: along
/// the tree path each split credits its feature with (child mean − parent
/// mean); for scoring systems each feature contributes its points.
pub fn attribute_prediction(
    model: &TrainedModel,
    features: &FeatureVector,
) -> Result<PredictionAttribution, LearnError> {
    model.check_schema(features)?;
    let schema = model.schema();
    let row = &features.values;
    let mut contributions: Vec<FeatureContribution> = schema
        .names()
        .zip(row)
        .map(|(name, &value)| FeatureContribution {
            feature: name.to_string(),
            value,
            contribution: 0.0,
        })
        .collect();
    let attribution = match &model.model {
        ModelKind::Tree(t) => {
            let path = t.decision_path(row);
            for w in path.windows(2) {
                let (parent, child) = (&t.nodes[w[0]], &t.nodes[w[1]]);
                if let TreeNode::Split { feature_index, .. } = parent {
                    contributions[*feature_index].contribution +=
                        child.positive_fraction() - parent.positive_fraction();
                }
            }
            PredictionAttribution {
                base_value: t.nodes[0].positive_fraction(),
                contributions,
                final_score: t.predict_row(row),
                scale: AttributionScale::Probability,
            }
        }
        ModelKind::Scoring(s) => {
            for (c, f) in contributions.iter_mut().zip(&s.features) {
                c.contribution = (f.weight as i64 * f.bin(c.value) as i64) as f64;
            }
            PredictionAttribution {
                base_value: s.intercept as f64,
                contributions,
                final_score: s.points(row) as f64,
                scale: AttributionScale::Points,
            }
        }
    };
    Ok(attribution)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterfactualTarget {
    /// Change the predicted class.
    FlipLabel,
    /// Reach rank ≤ k among the context candidates.
    EnterTopK(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub feature: String,
    pub original_value: f64,
    pub counterfactual_value: f64,
    pub resulting_score: f64,
    /// 1-based rank among the context; only for `EnterTopK`.
    pub resulting_rank: Option<usize>,
    pub target: CounterfactualTarget,
    pub sentence: String,
}

/// 1-based rank of (`me`, `score`) among `context`; ties go to the lower id.
pub fn rank_among(me: &CandidateId, score: f64, context: &[(CandidateId, f64)]) -> usize {
    1 + context
        .iter()
        .filter(|(id, s)| id != me && (*s > score || (*s == score && id < me)))
        .count()
}

/// Candidate values for one feature, smallest change first.
pub fn perturbation_menu(kind: FeatureKind, original: f64) -> Vec<f64> {
    match kind {
        FeatureKind::Recency => {
            let mut menu: Vec<f64> = RECENCY_MENU
                .iter()
                .copied()
                .filter(|&v| v != original)
                .collect();
            menu.sort_by(|a, b| {
                (a - original)
                    .abs()
                    .total_cmp(&(b - original).abs())
                    .then(a.total_cmp(b))
            });
            menu
        }
        FeatureKind::Count => COUNT_MENU.iter().map(|d| original + d).collect(),
        FeatureKind::Binary => vec![if original >= 0.5 { 0.0 } else { 1.0 }],
        FeatureKind::Fixed => Vec::new(),
    }
}

fn asset_noun(t: AssetType) -> &'static str {
    match t {
        AssetType::SourceFile => "file",
        AssetType::WarehouseTable => "table",
        AssetType::ConfigFile => "config file",
    }
}

fn days(v: f64) -> String {
    if v == 1.0 {
        "day".to_string()
    } else {
        format!("{v} days")
    }
}

fn render(
    feature: &str,
    asset_type: AssetType,
    original: f64,
    value: f64,
    outcome: &str,
) -> String {
    let noun = asset_noun(asset_type);
    let condition = match feature {
        "f_recency_days" => format!("Had you touched the {noun} in the last {}", days(value)),
        "f_touch_count_90d" => format!(
            "Had you interacted with the {noun} {} more times in the last 90 days",
            value - original
        ),
        "f_admin_actions_30d" => format!(
            "Had you run {} more admin-tool actions on the {noun} in the last 30 days",
            value - original
        ),
        "f_annotation_match" if value >= 0.5 => {
            format!("Had the {noun} named you in an ownership annotation")
        }
        "f_annotation_match" => format!("Had the {noun} not named you in an ownership annotation"),
        other => format!("Had {other} been {value} instead of {original}"),
    };
    format!("{condition}, {outcome}")
}

/// First single-feature change (schema order, smallest perturbation first)
/// that reaches `target`. `context` holds every shortlisted candidate's
/// current score and is required for `EnterTopK`.
pub fn find_counterfactual(
    model: &TrainedModel,
    features: &FeatureVector,
    target: CounterfactualTarget,
    context: &[(CandidateId, f64)],
) -> Result<Option<Counterfactual>, LearnError> {
    model.check_schema(features)?;
    let me = &features.candidate_id;
    let original_row = &features.values;
    let original_positive = model.predicts_positive(original_row);
    let reached = |row: &[f64]| -> (bool, f64, Option<usize>) {
        let score = model.predict_row(row);
        match target {
            CounterfactualTarget::FlipLabel => {
                (model.predicts_positive(row) != original_positive, score, None)
            }
            CounterfactualTarget::EnterTopK(k) => {
                let rank = rank_among(me, score, context);
                (rank <= k, score, Some(rank))
            }
        }
    };
    if let CounterfactualTarget::EnterTopK(_) = target {
        if reached(original_row).0 {
            return Ok(None);
        }
    }
    let outcome = match target {
        CounterfactualTarget::FlipLabel if original_positive => {
            "you would not have been recommended as owner".to_string()
        }
        CounterfactualTarget::FlipLabel => "you would have been recommended as owner".to_string(),
        CounterfactualTarget::EnterTopK(1) => "you would have been the top recommended owner".to_string(),
        CounterfactualTarget::EnterTopK(k) => {
            format!("you would have been among the top {k} recommended owners")
        }
    };
    let schema = FeatureSchema::for_type(features.asset_type);
    let mut row = original_row.clone();
    for (j, def) in schema.features.iter().enumerate() {
        let original = original_row[j];
        for value in perturbation_menu(def.kind, original) {
            row[j] = value;
            let (ok, score, rank) = reached(&row);
            if ok {
                return Ok(Some(Counterfactual {
                    feature: def.name.to_string(),
                    original_value: original,
                    counterfactual_value: value,
                    resulting_score: score,
                    resulting_rank: rank,
                    target,
                    sentence: render(def.name, features.asset_type, original, value, &outcome),
                }));
            }
        }
        row[j] = original;
    }
    Ok(None)
}
