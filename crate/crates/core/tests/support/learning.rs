//! Learning and explanation checks shared by the integration and acceptance
//! suites, each against an independent brute-force computation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ownership_core::explain::{
    attribute_prediction, find_counterfactual, perturbation_menu, permutation_importance, rank_among,
    CounterfactualTarget,
};
use ownership_core::featurize::{compute_features, FeatureSchema, FeatureVector, SCHEMA_VERSION};
use ownership_core::labeling::{build_dataset, events_for_type, extract_labeling_events, Label, LabeledExample};
use ownership_core::learn::{
    train_scoring_system, train_tree, ModelKind, ScoringSystemModel, TrainedModel, TreeNode,
    TreeParams,
};
use ownership_core::model::{AssetId, AssetType, CandidateId};
use ownership_core::recommend::shortlist;
use ownership_core::sim::SimOutput;

/// Labeled examples of one asset type from a simulated store.
pub fn sim_examples(out: &SimOutput, t: AssetType) -> Vec<LabeledExample> {
    let store = out.store();
    let events = extract_labeling_events(store, i64::MIN, i64::MAX);
    let events = events_for_type(store, &events, t);
    build_dataset(store, &events, None, 0).unwrap().train
}

/// Random source-file examples whose label follows a noisy threshold rule.
pub fn random_examples(seed: u64, n: usize) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = FeatureSchema::for_type(AssetType::SourceFile).len();
    (0..n)
        .map(|i| {
            let values: Vec<f64> = (0..width)
                .map(|j| match j {
                    3 => f64::from(rng.random_range(0..2u8)),
                    5 => f64::from(rng.random_range(0..7u8)),
                    _ => (rng.random_range(0..1000u32) as f64) / 10.0,
                })
                .collect();
            let signal = values[1] - values[0] + 40.0 * values[3];
            let positive = signal + rng.random_range(-30.0..30.0) > 20.0;
            LabeledExample {
                features: FeatureVector {
                    asset_id: AssetId::new(format!("a{i}")),
                    candidate_id: CandidateId::new(format!("c{i}")),
                    as_of: i as i64,
                    asset_type: AssetType::SourceFile,
                    schema_version: SCHEMA_VERSION,
                    values,
                },
                label: if positive { Label::Positive } else { Label::Negative },
                origin_event_id: format!("e{i}"),
            }
        })
        .collect()
}

fn tree_depth(nodes: &[TreeNode], i: usize) -> usize {
    match &nodes[i] {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Split { left, right, .. } => {
            1 + tree_depth(nodes, *left).max(tree_depth(nodes, *right))
        }
    }
}

/// Trains a default tree per seed twice. Returns (runs, constraint
/// violations, runs whose two serialized models differ).
pub fn tree_constraints(seeds: std::ops::Range<u64>) -> (usize, usize, usize) {
    let (mut runs, mut violations, mut nondeterministic) = (0, 0, 0);
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(50..600);
        let examples = random_examples(seed, n);
        let params = TreeParams {
            seed,
            ..Default::default()
        };
        let a = train_tree(&examples, &params, 0).unwrap();
        let b = train_tree(&examples, &params, 0).unwrap();
        runs += 1;
        let card = |m: &ownership_core::learn::DecisionTreeModel| {
            TrainedModel {
                model: ModelKind::Tree(m.clone()),
                metrics: Default::default(),
                dropped_features: Vec::new(),
            }
            .to_card()
        };
        if card(&a) != card(&b) {
            nondeterministic += 1;
        }
        if tree_depth(&a.nodes, 0) > params.max_depth {
            violations += 1;
        }
        let single_leaf = a.nodes.len() == 1;
        for node in &a.nodes {
            if let TreeNode::Leaf { sample_count, .. } = node {
                if !single_leaf && *sample_count < params.min_leaf {
                    violations += 1;
                }
            }
        }
    }
    (runs, violations, nondeterministic)
}

/// Exhaustive search over every (feature, midpoint threshold) by weighted
/// Gini impurity, compared as exact fractions. Ties keep the earliest pair.
pub fn exhaustive_root_split(rows: &[Vec<f64>], labels: &[bool], min_leaf: usize) -> Option<(usize, f64)> {
    // impurity·(l·r)/2 = pl·ql·r + pr·qr·l ; compare a/b < c/d by a·d < c·b
    let n = rows.len() as u128;
    let pos = labels.iter().filter(|&&y| y).count() as u128;
    let parent = (pos * (n - pos), n); // 2pq/n scaled by 1/2
    let mut best: Option<((u128, u128), usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let t = if w[0] < t { t } else { w[1] };
            let (mut l, mut pl) = (0u128, 0u128);
            for (r, &y) in rows.iter().zip(labels) {
                if r[f] < t {
                    l += 1;
                    pl += y as u128;
                }
            }
            let r = n - l;
            if (l as usize) < min_leaf || (r as usize) < min_leaf {
                continue;
            }
            let pr = pos - pl;
            let score = (pl * (l - pl) * r + pr * (r - pr) * l, l * r);
            if best.is_none_or(|(b, _, _)| score.0 * b.1 < b.0 * score.1) {
                best = Some((score, f, t));
            }
        }
    }
    let (score, f, t) = best?;
    (score.0 * parent.1 < parent.0 * score.1).then_some((f, t))
}

/// Brute-force intercept: the lowest integer in [-20, 20] maximizing
/// training accuracy given the model's feature points.
pub fn scan_intercept(model: &ScoringSystemModel, examples: &[LabeledExample]) -> i32 {
    let base: Vec<i64> = examples
        .iter()
        .map(|e| model.points(&e.features.values) - model.intercept as i64)
        .collect();
    let mut best = (0usize, i32::MIN);
    for b in -20..=20i32 {
        let correct = base
            .iter()
            .zip(examples)
            .filter(|(p, e)| (**p + b as i64 >= 0) == e.label.is_positive())
            .count();
        if best.1 == i32::MIN || correct > best.0 {
            best = (correct, b);
        }
    }
    best.1
}

#[derive(Debug, Default)]
pub struct ScoringCheck {
    pub weights_out_of_range: usize,
    pub intercept_matches: bool,
    /// Dropped features among the duplicated pair.
    pub duplicate_drops: usize,
}

pub fn scoring_validity(examples: &[LabeledExample]) -> ScoringCheck {
    let (model, _) = train_scoring_system(examples, 5, 0, 0).unwrap();
    let mut check = ScoringCheck {
        weights_out_of_range: model
            .features
            .iter()
            .filter(|f| !(-5..=5).contains(&f.weight))
            .count(),
        intercept_matches: scan_intercept(&model, examples) == model.intercept,
        ..Default::default()
    };
    // Copy the touch count over the dependency-experience column.
    let schema = FeatureSchema::for_type(examples[0].features.asset_type);
    let a = schema.index_of("f_touch_count_90d").unwrap();
    let b = schema.index_of("f_dependency_experience").unwrap();
    let dup: Vec<LabeledExample> = examples
        .iter()
        .cloned()
        .map(|mut e| {
            e.features.values[b] = e.features.values[a];
            e
        })
        .collect();
    let (_, dropped) = train_scoring_system(&dup, 5, 0, 0).unwrap();
    check.duplicate_drops = dropped
        .iter()
        .filter(|d| *d == schema.features[a].name || *d == schema.features[b].name)
        .count();
    check
}

#[derive(Debug, Default)]
pub struct ExplainCheck {
    pub predictions: usize,
    pub max_additivity_error: f64,
    pub counterfactuals: usize,
    pub counterfactual_failures: usize,
    /// `None` answers confirmed by scanning every single-feature menu change.
    pub absences: usize,
    pub absence_failures: usize,
    /// Permutation importance of features a tree never splits on that is not exactly 0.
    pub unused_nonzero: usize,
    pub unused_checked: usize,
}

fn wrap_tree(examples: &[LabeledExample]) -> TrainedModel {
    TrainedModel {
        model: ModelKind::Tree(train_tree(examples, &TreeParams::default(), 0).unwrap()),
        metrics: Default::default(),
        dropped_features: Vec::new(),
    }
}

fn wrap_scoring(examples: &[LabeledExample]) -> TrainedModel {
    let (m, dropped) = train_scoring_system(examples, 5, 0, 0).unwrap();
    TrainedModel {
        model: ModelKind::Scoring(m),
        metrics: Default::default(),
        dropped_features: dropped,
    }
}

/// Every single-feature change on the menus, in schema order.
fn menu_scan(fv: &FeatureVector) -> Vec<(usize, f64)> {
    fv.schema()
        .features
        .iter()
        .enumerate()
        .flat_map(|(j, def)| {
            perturbation_menu(def.kind, fv.values[j])
                .into_iter()
                .map(move |v| (j, v))
        })
        .collect()
}

/// Random predictions from trees and scoring systems on simulated stores.
pub fn explanation_soundness(out: &SimOutput, n: usize, seed: u64) -> ExplainCheck {
    let store = out.store();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = Vec::new();
    for &t in AssetType::ALL {
        let ex = sim_examples(out, t);
        if ex.len() >= 50 {
            models.push(wrap_tree(&ex));
            models.push(wrap_scoring(&ex));
        }
    }
    let mut check = ExplainCheck::default();
    let (start, end) = (out.config.start(), out.config.end());
    while check.predictions < n {
        let model = models.choose(&mut rng).unwrap();
        let assets: Vec<&AssetId> = store
            .assets()
            .filter(|a| a.asset_type == model.asset_type())
            .map(|a| &a.asset_id)
            .collect();
        let asset = *assets.choose(&mut rng).unwrap();
        let as_of = rng.random_range(start..end);
        let list = shortlist(store, asset, as_of).unwrap();
        let Some(me) = list.choose(&mut rng) else { continue };
        let fv = compute_features(store, asset, me, as_of).unwrap();
        check.predictions += 1;
        let attribution = attribute_prediction(model, &fv).unwrap();
        check.max_additivity_error = check.max_additivity_error.max(attribution.additivity_error());

        let context: Vec<(CandidateId, f64)> = list
            .iter()
            .map(|c| {
                let v = compute_features(store, asset, c, as_of).unwrap();
                (c.clone(), model.predict_row(&v.values))
            })
            .collect();
        let original_positive = model.predicts_positive(&fv.values);
        for target in [CounterfactualTarget::FlipLabel, CounterfactualTarget::EnterTopK(1)] {
            let reaches = |row: &[f64]| match target {
                CounterfactualTarget::FlipLabel => model.predicts_positive(row) != original_positive,
                CounterfactualTarget::EnterTopK(k) => {
                    rank_among(me, model.predict_row(row), &context) <= k
                }
            };
            let already = matches!(target, CounterfactualTarget::EnterTopK(_)) && reaches(&fv.values);
            let first_hit = menu_scan(&fv).into_iter().find(|(j, v)| {
                let mut row = fv.values.clone();
                row[*j] = *v;
                reaches(&row)
            });
            match find_counterfactual(model, &fv, target, &context).unwrap() {
                None => {
                    if !already {
                        check.absences += 1;
                        check.absence_failures += first_hit.is_some() as usize;
                    }
                }
                Some(cf) => {
                    check.counterfactuals += 1;
                    let j = fv.schema().index_of(&cf.feature).unwrap();
                    let mut row = fv.values.clone();
                    row[j] = cf.counterfactual_value;
                    let ok = model.predict_row(&row) == cf.resulting_score
                        && reaches(&row)
                        && !already
                        && first_hit == Some((j, cf.counterfactual_value));
                    if !ok {
                        check.counterfactual_failures += 1;
                    }
                }
            }
        }
    }
    for model in models.iter().filter(|m| matches!(m.model, ModelKind::Tree(_))) {
        let ModelKind::Tree(tree) = &model.model else { unreachable!() };
        let mut test = sim_examples(out, model.asset_type());
        test.shuffle(&mut rng);
        test.truncate(300);
        let report = permutation_importance(model, &test, 5, seed).unwrap();
        let used = tree.used_features();
        for (j, f) in report.features.iter().enumerate() {
            if !used.contains(&j) {
                check.unused_checked += 1;
                if f.mean != 0.0 || f.std_dev != 0.0 {
                    check.unused_nonzero += 1;
                }
            }
        }
    }
    check
}
