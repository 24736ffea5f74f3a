//! Labeling events and the point-in-time joins that turn them into datasets.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{compute_features, FeatureSchema, FeatureVector};
use crate::learn::LearnError;
use crate::model::{AssetId, AssetType, AttributionSource, CandidateId, DecisionKind, Store};
use crate::time::Timestamp;

/// A human decision usable as supervision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingEvent {
    pub event_id: String,
    pub asset_id: AssetId,
    pub candidate_id: CandidateId,
    pub decision: DecisionKind,
    pub decided_by: CandidateId,
    pub at: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
    pub origin_event_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinFailure {
    pub event_id: String,
    pub asset_id: AssetId,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub failures: Vec<JoinFailure>,
}

/// Identifier of the n-th owner change when it is used as a labeling event.
pub fn owner_change_event_id(index: usize) -> String {
    format!("own-{:06}", index + 1)
}

/// Human decisions in `[since, until)`, sorted by time then event id.
///
/// Recorded Accept/Reject/Delegate decisions are included as-is. Ownership
/// transfers made directly by a human (not through a recommendation) count
/// as an Accept of the new owner.
pub fn extract_labeling_events(
    store: &Store,
    since: Timestamp,
    until: Timestamp,
) -> Vec<LabelingEvent> {
    let in_window = |t: Timestamp| since <= t && t < until;
    let mut out: Vec<LabelingEvent> = store
        .decisions()
        .iter()
        .filter(|d| in_window(d.at))
        .map(|d| LabelingEvent {
            event_id: d.decision_id.clone(),
            asset_id: d.asset_id.clone(),
            candidate_id: d.candidate_id.clone(),
            decision: d.decision,
            decided_by: d.decided_by.clone(),
            at: d.at,
        })
        .collect();
    for (i, c) in store.owner_changes().iter().enumerate() {
        if c.source != AttributionSource::HumanDecision || c.decision_id.is_some() || !in_window(c.at)
        {
            continue;
        }
        let Some(by) = &c.changed_by else { continue };
        out.push(LabelingEvent {
            event_id: owner_change_event_id(i),
            asset_id: c.asset_id.clone(),
            candidate_id: c.owner_id.clone(),
            decision: DecisionKind::Accept,
            decided_by: by.clone(),
            at: c.at,
        });
    }
    out.sort_by(|a, b| a.at.cmp(&b.at).then_with(|| a.event_id.cmp(&b.event_id)));
    out
}

/// Joins Accept/Reject events with features at event time and splits them
/// temporally: the earliest ⌈fraction·n⌉ examples train, the rest test.
/// `split_fraction = None` puts everything in train. The seed only orders
/// examples that share a timestamp.
pub fn build_dataset(
    store: &Store,
    events: &[LabelingEvent],
    split_fraction: Option<f64>,
    seed: u64,
) -> Result<Dataset, LearnError> {
    if let Some(f) = split_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(LearnError::InvalidParameter(format!(
                "split fraction {f} outside (0, 1)"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut joined: Vec<(Timestamp, u64, LabeledExample)> = Vec::new();
    let mut failures = Vec::new();
    for ev in events {
        let label = match ev.decision {
            DecisionKind::Accept => Label::Positive,
            DecisionKind::Reject => Label::Negative,
            DecisionKind::Delegate => continue,
        };
        let fail = |reason: String| JoinFailure {
            event_id: ev.event_id.clone(),
            asset_id: ev.asset_id.clone(),
            reason,
        };
        match store.asset(&ev.asset_id) {
            None => {
                failures.push(fail("unknown asset".into()));
                continue;
            }
            Some(a) if a.deleted_at.is_some_and(|d| d <= ev.at) => {
                failures.push(fail("asset deleted".into()));
                continue;
            }
            Some(_) => {}
        }
        match compute_features(store, &ev.asset_id, &ev.candidate_id, ev.at) {
            Ok(features) => joined.push((
                ev.at,
                rng.random(),
                LabeledExample {
                    features,
                    label,
                    origin_event_id: ev.event_id.clone(),
                },
            )),
            Err(e) => failures.push(fail(e.to_string())),
        }
    }
    joined.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = joined.len();
    let n_train = match split_fraction {
        None => n,
        Some(f) => ((f * n as f64).ceil() as usize).min(n),
    };
    let mut examples = joined.into_iter().map(|(_, _, e)| e);
    let train = examples.by_ref().take(n_train).collect();
    let test = examples.collect();
    Ok(Dataset {
        train,
        test,
        failures,
    })
}

/// Keeps events about assets of one type (unknown assets are kept so the
/// join reports them).
pub fn events_for_type(
    store: &Store,
    events: &[LabelingEvent],
    asset_type: AssetType,
) -> Vec<LabelingEvent> {
    events
        .iter()
        .filter(|e| {
            store
                .asset(&e.asset_id)
                .is_none_or(|a| a.asset_type == asset_type)
        })
        .cloned()
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ExampleLine {
    schema_version: u32,
    asset_type: AssetType,
    asset_id: AssetId,
    candidate_id: CandidateId,
    as_of: Timestamp,
    features: serde_json::Map<String, serde_json::Value>,
    label: Label,
    origin_event_id: String,
}

/// Writes one JSON record per example.
pub fn write_examples<W: Write>(out: &mut W, examples: &[LabeledExample]) -> io::Result<()> {
    for ex in examples {
        let f = &ex.features;
        let line = ExampleLine {
            schema_version: f.schema_version,
            asset_type: f.asset_type,
            asset_id: f.asset_id.clone(),
            candidate_id: f.candidate_id.clone(),
            as_of: f.as_of,
            features: f
                .named()
                .map(|(n, v)| (n.to_string(), serde_json::json!(v)))
                .collect(),
            label: ex.label,
            origin_event_id: ex.origin_event_id.clone(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_examples`]; blank lines are skipped.
pub fn read_examples<R: BufRead>(input: R) -> Result<Vec<LabeledExample>, LearnError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let bad = |reason: String| LearnError::InvalidParameter(format!("line {}: {reason}", i + 1));
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let schema = FeatureSchema::for_type(rec.asset_type);
        if rec.schema_version != schema.version {
            return Err(LearnError::SchemaMismatch {
                expected: schema.version.to_string(),
                found: rec.schema_version.to_string(),
            });
        }
        let values = schema
            .names()
            .map(|n| {
                rec.features
                    .get(n)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| bad(format!("missing feature `{n}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if rec.features.len() != values.len() {
            return Err(bad("unexpected feature names".into()));
        }
        out.push(LabeledExample {
            features: FeatureVector {
                asset_id: rec.asset_id,
                candidate_id: rec.candidate_id,
                as_of: rec.as_of,
                asset_type: rec.asset_type,
                schema_version: rec.schema_version,
                values,
            },
            label: rec.label,
            origin_event_id: rec.origin_event_id,
        });
    }
    Ok(out)
}
