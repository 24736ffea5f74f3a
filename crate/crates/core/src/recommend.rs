//! Candidate shortlists, ranked recommendations and confidence bands.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::explain::{
    attribute_prediction, find_counterfactual, Counterfactual, CounterfactualTarget,
    PredictionAttribution,
};
use crate::featurize::compute_features;
use crate::learn::ModelRecord;
use crate::model::store::count_before;
use crate::model::{AssetId, AssetType, CandidateId, Direction, ModelError, Store};
use crate::time::{Timestamp, DAY};

pub const SHORTLIST_MIN: usize = 3;
pub const SHORTLIST_MAX: usize = 100;
pub const SHORTLIST_WINDOW_DAYS: i64 = 365;
/// Entries ranked below this many get a "nearly recommended" counterfactual.
pub const TOP_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    AutoEligible,
    NeedsReview,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub auto: f64,
    pub margin: f64,
    pub abstain: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            auto: 0.9,
            margin: 0.2,
            abstain: 0.5,
        }
    }
}

impl BandThresholds {
    /// Band for scores sorted descending.
    pub fn band(&self, sorted_scores: &[f64]) -> Band {
        let top = sorted_scores.first().copied().unwrap_or(0.0);
        let second = sorted_scores.get(1).copied().unwrap_or(0.0);
        if top < self.abstain {
            Band::Inconclusive
        } else if top >= self.auto && top - second >= self.margin {
            Band::AutoEligible
        } else {
            Band::NeedsReview
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub candidate_id: CandidateId,
    pub score: f64,
    pub attribution: PredictionAttribution,
    #[serde(default)]
    pub counterfactual: Option<Counterfactual>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub recommendation_id: String,
    pub asset_id: AssetId,
    pub asset_type: AssetType,
    pub as_of: Timestamp,
    pub entries: Vec<RecommendationEntry>,
    pub band: Band,
    pub model_id: String,
}

impl Recommendation {
    pub fn top(&self) -> Option<&RecommendationEntry> {
        self.entries.first()
    }
}

/// Candidates considered for `asset_id` at `as_of`, sorted by id.
///
/// Union of (a) candidates with an interaction on the asset in the 365 days
/// before `as_of`, (b) candidates named by its annotations and (c) owners of
/// its dependency neighbors; only candidates active just before `as_of`.
/// More than 100 keeps the most frequent touchers; fewer than 3 backfills from
/// the current owner's team, then from all active candidates by id.
pub fn shortlist(
    store: &Store,
    asset_id: &AssetId,
    as_of: Timestamp,
) -> Result<Vec<CandidateId>, ModelError> {
    let aix = store.asset_ix(asset_id)?;
    let state = store.asset_at(aix);
    let before = as_of - 1;
    let active = |cix: usize| store.candidate_at(cix).state_at(before).1;
    let window_start = as_of - SHORTLIST_WINDOW_DAYS * DAY;
    let touches_in_window = |cix: usize| {
        state.actors.get(&cix).map_or(0, |t| {
            count_before(&t.all, as_of) - count_before(&t.all, window_start)
        })
    };

    let mut chosen: HashSet<usize> = HashSet::new();
    for &cix in state.actors.keys() {
        if touches_in_window(cix) > 0 {
            chosen.insert(cix);
        }
    }
    for a in &state.asset.annotations {
        if a.observed_at < as_of {
            if let Ok(cix) = store.candidate_ix(&a.named_candidate) {
                chosen.insert(cix);
            }
        }
    }
    for n in store.neighbor_ixs(aix, None, Direction::Both, Some(as_of)) {
        if let Some(owner) = store.owner_ix_before(n, as_of) {
            chosen.insert(owner);
        }
    }
    let mut list: Vec<usize> = chosen.into_iter().filter(|&c| active(c)).collect();
    let id_of = |cix: usize| &store.candidate_at(cix).candidate.candidate_id;

    if list.len() > SHORTLIST_MAX {
        list.sort_by(|&a, &b| {
            touches_in_window(b)
                .cmp(&touches_in_window(a))
                .then_with(|| id_of(a).cmp(id_of(b)))
        });
        list.truncate(SHORTLIST_MAX);
    }
    if list.len() < SHORTLIST_MIN {
        let mut taken: HashSet<usize> = list.iter().copied().collect();
        let mut by_id: Vec<usize> = (0..store.candidate_len()).filter(|&c| active(c)).collect();
        by_id.sort_by(|&a, &b| id_of(a).cmp(id_of(b)));
        if let Some(owner) = store.owner_ix_before(aix, as_of) {
            let team = store.candidate_at(owner).state_at(before).0;
            for &c in &by_id {
                if list.len() >= SHORTLIST_MIN {
                    break;
                }
                if store.candidate_at(c).state_at(before).0 == team && taken.insert(c) {
                    list.push(c);
                }
            }
        }
        for &c in &by_id {
            if list.len() >= SHORTLIST_MIN {
                break;
            }
            if taken.insert(c) {
                list.push(c);
            }
        }
    }
    let mut ids: Vec<CandidateId> = list.into_iter().map(|c| id_of(c).clone()).collect();
    ids.sort();
    Ok(ids)
}

/// Scores the shortlist with `model`, ranks it and attaches explanations.
/// The recommendation id is the store's next free id.
pub fn recommend_owner(
    store: &Store,
    asset_id: &AssetId,
    as_of: Timestamp,
    model: &ModelRecord,
    thresholds: &BandThresholds,
) -> Result<Recommendation, Error> {
    let asset = store
        .asset(asset_id)
        .ok_or_else(|| ModelError::UnknownAsset(asset_id.clone()))?;
    if model.model.asset_type() != asset.asset_type {
        return Err(Error::NoModelForAssetType(asset.asset_type));
    }
    let candidates = shortlist(store, asset_id, as_of)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        let fv = compute_features(store, asset_id, &c, as_of)?;
        let score = crate::learn::predict(&model.model, &fv)?;
        scored.push((fv, score));
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.candidate_id.cmp(&b.0.candidate_id))
    });
    let context: Vec<(CandidateId, f64)> = scored
        .iter()
        .map(|(fv, s)| (fv.candidate_id.clone(), *s))
        .collect();
    let mut entries = Vec::with_capacity(scored.len());
    for (i, (fv, score)) in scored.iter().enumerate() {
        let counterfactual = if i == TOP_K {
            find_counterfactual(
                &model.model,
                fv,
                CounterfactualTarget::EnterTopK(TOP_K),
                &context,
            )?
        } else {
            None
        };
        entries.push(RecommendationEntry {
            candidate_id: fv.candidate_id.clone(),
            score: *score,
            attribution: attribute_prediction(&model.model, fv)?,
            counterfactual,
        });
    }
    let scores: Vec<f64> = entries.iter().map(|e| e.score).collect();
    Ok(Recommendation {
        recommendation_id: store.next_recommendation_id(),
        asset_id: asset_id.clone(),
        asset_type: asset.asset_type,
        as_of,
        band: thresholds.band(&scores),
        entries,
        model_id: model.model_id.clone(),
    })
}

/// Candidate ids in the order a recommendation ranks them.
pub fn ranked_ids(rec: &Recommendation) -> Vec<&CandidateId> {
    rec.entries.iter().map(|e| &e.candidate_id).collect()
}
