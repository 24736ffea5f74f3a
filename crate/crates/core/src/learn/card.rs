//! Text model cards.
//!
//! ```text
//! ownership-model-card v1
//! kind: tree
//! asset_type: SourceFile
//! schema_version: 1
//! trained_at: 1718236800
//! seed: 7
//! features: f_recency_days f_touch_count_90d ...
//! dropped: -
//! metric train_accuracy: 0.93
//! max_depth: 5
//! min_leaf: 20
//! node 0: split f_recency_days < 3.5 left 1 right 2 fraction 0.5 samples 400
//! node 1: leaf fraction 0.9 samples 180
//! ```
//!
//! Scoring systems replace the node list with `weight_bound`, `intercept`
//! and one `points <feature>: weight <w> cuts <c>...` line per feature.
//! Lines starting with `#` are commentary and ignored by the parser.

use std::collections::HashMap;
use std::fmt::Write;

use super::{
    DecisionTreeModel, FeaturePoints, LearnError, ModelKind, ScoringSystemModel, TrainedModel,
    TrainingMetrics, TreeNode,
};
use crate::featurize::FeatureSchema;
use crate::model::AssetType;

const HEADER: &str = "ownership-model-card v1";

pub(super) fn render(model: &TrainedModel) -> String {
    let schema = model.schema();
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "kind: {}", model.kind_name());
    let _ = writeln!(out, "asset_type: {}", model.asset_type());
    let _ = writeln!(out, "schema_version: {}", model.schema_version());
    let _ = writeln!(out, "trained_at: {}", model.trained_at());
    let seed = match &model.model {
        ModelKind::Tree(t) => t.seed,
        ModelKind::Scoring(s) => s.seed,
    };
    let _ = writeln!(out, "seed: {seed}");
    let _ = writeln!(out, "features: {}", schema.names().collect::<Vec<_>>().join(" "));
    if model.dropped_features.is_empty() {
        let _ = writeln!(out, "dropped: -");
    } else {
        let _ = writeln!(out, "dropped: {}", model.dropped_features.join(" "));
    }
    let m = &model.metrics;
    for (name, v) in [
        ("train_accuracy", m.train_accuracy),
        ("train_auc", m.train_auc),
        ("test_accuracy", m.test_accuracy),
        ("test_auc", m.test_auc),
    ] {
        if let Some(v) = v {
            let _ = writeln!(out, "metric {name}: {v}");
        }
    }
    match &model.model {
        ModelKind::Tree(t) => {
            let _ = writeln!(out, "max_depth: {}", t.max_depth);
            let _ = writeln!(out, "min_leaf: {}", t.min_leaf);
            for (i, n) in t.nodes.iter().enumerate() {
                match n {
                    TreeNode::Leaf {
                        positive_fraction,
                        sample_count,
                    } => {
                        let _ = writeln!(
                            out,
                            "node {i}: leaf fraction {positive_fraction} samples {sample_count}"
                        );
                    }
                    TreeNode::Split {
                        feature_index,
                        threshold,
                        left,
                        right,
                        positive_fraction,
                        sample_count,
                    } => {
                        let _ = writeln!(
                            out,
                            "node {i}: split {} < {threshold} left {left} right {right} fraction {positive_fraction} samples {sample_count}",
                            schema.features[*feature_index].name
                        );
                    }
                }
            }
        }
        ModelKind::Scoring(s) => {
            let _ = writeln!(out, "weight_bound: {}", s.weight_bound);
            let _ = writeln!(out, "intercept: {}", s.intercept);
            let _ = writeln!(out, "# score = intercept + sum of points; owner suggested when score >= 0");
            for (def, f) in schema.features.iter().zip(&s.features) {
                let _ = write!(out, "points {}: weight {} cuts", def.name, f.weight);
                for c in &f.cuts {
                    let _ = write!(out, " {c}");
                }
                out.push('\n');
                if f.weight != 0 {
                    for b in 0..=f.cuts.len() {
                        let range = match (b.checked_sub(1).map(|i| f.cuts[i]), f.cuts.get(b)) {
                            (None, Some(hi)) => format!("x <= {hi}"),
                            (Some(lo), Some(hi)) => format!("{lo} < x <= {hi}"),
                            (Some(lo), None) => format!("x > {lo}"),
                            (None, None) => "any x".to_string(),
                        };
                        let _ = writeln!(out, "#   {range}: {} points", f.weight as i64 * b as i64);
                    }
                }
            }
        }
    }
    out
}

fn bad(line: usize, reason: impl Into<String>) -> LearnError {
    LearnError::InvalidCard {
        line,
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, LearnError> {
    s.parse().map_err(|_| bad(line, format!("bad number `{s}`")))
}

pub(super) fn parse(text: &str) -> Result<TrainedModel, LearnError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(bad(n, format!("unsupported header `{other}`"))),
        None => return Err(bad(0, "empty model card")),
    }
    let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut metrics = TrainingMetrics::default();
    let mut nodes: Vec<(usize, usize, &str)> = Vec::new();
    let mut points: Vec<(usize, &str, &str)> = Vec::new();
    for (n, line) in lines {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| bad(n, "expected `key: value`"))?;
        let value = value.trim();
        if let Some(idx) = key.strip_prefix("node ") {
            nodes.push((n, num(n, idx.trim())?, value));
        } else if let Some(name) = key.strip_prefix("points ") {
            points.push((n, name.trim(), value));
        } else if let Some(name) = key.strip_prefix("metric ") {
            let v: f64 = num(n, value)?;
            match name.trim() {
                "train_accuracy" => metrics.train_accuracy = Some(v),
                "train_auc" => metrics.train_auc = Some(v),
                "test_accuracy" => metrics.test_accuracy = Some(v),
                "test_auc" => metrics.test_auc = Some(v),
                other => return Err(bad(n, format!("unknown metric `{other}`"))),
            }
        } else if fields.insert(key.trim(), (n, value)).is_some() {
            return Err(bad(n, format!("duplicate field `{key}`")));
        }
    }
    let field = |k: &str| fields.get(k).copied().ok_or_else(|| bad(0, format!("missing `{k}`")));

    let (n, v) = field("asset_type")?;
    let asset_type: AssetType = v.parse().map_err(|e: String| bad(n, e))?;
    let schema = FeatureSchema::for_type(asset_type);
    let (n, v) = field("schema_version")?;
    let schema_version: u32 = num(n, v)?;
    if schema_version != schema.version {
        return Err(LearnError::SchemaMismatch {
            expected: schema.version.to_string(),
            found: schema_version.to_string(),
        });
    }
    let (n, v) = field("features")?;
    if !v.split_whitespace().eq(schema.names()) {
        return Err(bad(n, "feature list does not match the schema"));
    }
    let (n, v) = field("trained_at")?;
    let trained_at = num(n, v)?;
    let (n, v) = field("seed")?;
    let seed = num(n, v)?;
    let (_, v) = field("dropped")?;
    let dropped_features: Vec<String> = if v == "-" {
        Vec::new()
    } else {
        v.split_whitespace().map(str::to_string).collect()
    };
    let feature_index = |n: usize, name: &str| {
        schema
            .index_of(name)
            .ok_or_else(|| bad(n, format!("unknown feature `{name}`")))
    };

    let (n, kind) = field("kind")?;
    let model = match kind {
        "tree" => {
            let (n, v) = field("max_depth")?;
            let max_depth = num(n, v)?;
            let (n, v) = field("min_leaf")?;
            let min_leaf = num(n, v)?;
            let mut parsed = Vec::with_capacity(nodes.len());
            for (i, &(n, idx, body)) in nodes.iter().enumerate() {
                if idx != i {
                    return Err(bad(n, format!("expected node {i}")));
                }
                let t: Vec<&str> = body.split_whitespace().collect();
                let node = match t.as_slice() {
                    ["leaf", "fraction", p, "samples", c] => TreeNode::Leaf {
                        positive_fraction: num(n, p)?,
                        sample_count: num(n, c)?,
                    },
                    ["split", f, "<", th, "left", l, "right", r, "fraction", p, "samples", c] => {
                        TreeNode::Split {
                            feature_index: feature_index(n, f)?,
                            threshold: num(n, th)?,
                            left: num(n, l)?,
                            right: num(n, r)?,
                            positive_fraction: num(n, p)?,
                            sample_count: num(n, c)?,
                        }
                    }
                    _ => return Err(bad(n, "malformed node")),
                };
                if let TreeNode::Split { left, right, .. } = node {
                    if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                        return Err(bad(n, "child index out of order"));
                    }
                }
                parsed.push(node);
            }
            if parsed.is_empty() {
                return Err(bad(n, "tree has no nodes"));
            }
            ModelKind::Tree(DecisionTreeModel {
                nodes: parsed,
                max_depth,
                min_leaf,
                asset_type,
                schema_version,
                trained_at,
                seed,
            })
        }
        "scoring" => {
            let (n, v) = field("weight_bound")?;
            let weight_bound: i32 = num(n, v)?;
            let (n, v) = field("intercept")?;
            let intercept = num(n, v)?;
            if points.len() != schema.len() {
                return Err(bad(n, "points table does not cover the schema"));
            }
            let mut features = Vec::with_capacity(points.len());
            for (i, &(n, name, body)) in points.iter().enumerate() {
                if feature_index(n, name)? != i {
                    return Err(bad(n, "points out of schema order"));
                }
                let t: Vec<&str> = body.split_whitespace().collect();
                let ["weight", w, "cuts", cuts @ ..] = t.as_slice() else {
                    return Err(bad(n, "malformed points line"));
                };
                let weight: i32 = num(n, w)?;
                if weight.abs() > weight_bound {
                    return Err(bad(n, "weight outside bound"));
                }
                features.push(FeaturePoints {
                    cuts: cuts.iter().map(|c| num(n, c)).collect::<Result<_, _>>()?,
                    weight,
                });
            }
            ModelKind::Scoring(ScoringSystemModel {
                features,
                intercept,
                weight_bound,
                asset_type,
                schema_version,
                trained_at,
                seed,
            })
        }
        other => return Err(bad(n, format!("unknown model kind `{other}`"))),
    };
    Ok(TrainedModel {
        model,
        metrics,
        dropped_features,
    })
}
