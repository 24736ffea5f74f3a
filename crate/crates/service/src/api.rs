use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use ownership_core::engine::{DecisionInput, DecisionOutcome, IngestReport};
use ownership_core::health::{churn, health_report, ChurnSeries, HealthReport};
use ownership_core::ingest::LogFormat;
use ownership_core::learn::{ModelRecord, ModelSpec, TrainConfig, TrainingMetrics};
use ownership_core::model::{
    Asset, AssetId, AssetType, AttributionRecord, CandidateId, RecommendationState, Store,
};
use ownership_core::persist::FileJournal;
use ownership_core::recommend::Recommendation;
use ownership_core::time::{day_of, parse_day, parse_time, Timestamp};
use ownership_core::Engine;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::{Capability, Session};
use crate::AppState;

type AppResult<T> = Result<Json<T>, ApiError>;
type Shared = State<Arc<AppState>>;

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

pub(crate) fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/api/assets", get(list_assets))
        .route("/api/assets/{*id}", get(get_asset))
        .route("/api/recommendations", get(list_recommendations).post(issue_recommendation))
        .route("/api/recommendations/{id}", get(get_recommendation))
        .route("/api/recommendations/{id}/decision", post(decide))
        .route("/api/ingest/logs", post(ingest_logs))
        .route("/api/train", post(train))
        .route("/api/health-report", get(get_health))
        .route("/api/churn", get(get_churn))
        .route("/api/models/current", get(current_models))
}

/// The caller behind a `Authorization: Bearer <token>` header.
pub struct Caller(pub Session);

impl FromRequestParts<Arc<AppState>> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
        state
            .sessions
            .get(token.trim())
            .cloned()
            .map(Caller)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown session token"))
    }
}

impl Caller {
    fn require(&self, cap: Capability) -> Result<(), ApiError> {
        if self.0.can(cap) {
            Ok(())
        } else {
            Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "forbidden",
                format!("session lacks the {cap:?} capability"),
            ))
        }
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct PageQuery {
    /// Sequence number of the last item already seen.
    pub cursor: Option<u64>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    /// Pass back as `cursor` for the next page; absent on the last page.
    pub next_cursor: Option<u64>,
    /// Matching items across all pages.
    pub total: usize,
}

/// `items` must be sorted by sequence number.
fn paginate<T>(items: Vec<(u64, T)>, q: &PageQuery) -> Result<Page<T>, ApiError> {
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_PAGE}")));
    }
    let total = items.len();
    let mut rest = items
        .into_iter()
        .filter(|(seq, _)| q.cursor.is_none_or(|c| *seq > c))
        .peekable();
    let mut page = Vec::new();
    let mut last = None;
    while page.len() < limit {
        let Some((seq, item)) = rest.next() else { break };
        last = Some(seq);
        page.push(item);
    }
    Ok(Page {
        items: page,
        next_cursor: if rest.peek().is_some() { last } else { None },
        total,
    })
}

fn parse<T: FromStr<Err = String>>(s: &str) -> Result<T, ApiError> {
    s.parse().map_err(ApiError::bad_request)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssetSummary {
    pub asset_id: AssetId,
    pub asset_type: AssetType,
    pub path_or_name: String,
    pub created_at: Timestamp,
    pub deleted_at: Option<Timestamp>,
    pub owner: Option<CandidateId>,
    pub sequence: u64,
}

fn summarize(store: &Store, a: &Asset, now: Timestamp) -> AssetSummary {
    AssetSummary {
        asset_id: a.asset_id.clone(),
        asset_type: a.asset_type,
        path_or_name: a.path_or_name.clone(),
        created_at: a.created_at,
        deleted_at: a.deleted_at,
        owner: store.current_owner(&a.asset_id, now).ok().flatten().cloned(),
        sequence: store.asset_sequence(&a.asset_id).unwrap_or(0),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct AssetQuery {
    #[serde(rename = "type")]
    pub asset_type: Option<String>,
    #[serde(default)]
    pub unowned: bool,
}

async fn list_assets(
    State(st): Shared,
    caller: Caller,
    Query(q): Query<AssetQuery>,
    Query(page): Query<PageQuery>,
) -> AppResult<Page<AssetSummary>> {
    caller.require(Capability::Read)?;
    let ty: Option<AssetType> = q.asset_type.as_deref().map(parse).transpose()?;
    let engine = st.engine.read();
    let store = engine.store();
    let now = st.now(&engine);
    let mut items: Vec<(u64, AssetSummary)> = store
        .assets()
        .filter(|a| ty.is_none_or(|t| a.asset_type == t))
        .map(|a| summarize(store, a, now))
        .filter(|s| !q.unowned || (s.owner.is_none() && s.deleted_at.is_none()))
        .map(|s| (s.sequence, s))
        .collect();
    items.sort_by_key(|(seq, _)| *seq);
    Ok(Json(paginate(items, &page)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssetDetail {
    #[serde(flatten)]
    pub summary: AssetSummary,
    pub attribution: Vec<AttributionRecord>,
    pub annotations: Vec<ownership_core::model::OwnershipAnnotation>,
    pub pending_recommendations: Vec<String>,
}

async fn get_asset(State(st): Shared, caller: Caller, Path(id): Path<String>) -> AppResult<AssetDetail> {
    caller.require(Capability::Read)?;
    let engine = st.engine.read();
    let store = engine.store();
    let asset = store
        .asset(&AssetId::new(id.as_str()))
        .or_else(|| store.find_asset_by_path(&id))
        .ok_or_else(|| ApiError::not_found(format!("unknown asset `{id}`")))?;
    let now = st.now(&engine);
    Ok(Json(AssetDetail {
        summary: summarize(store, asset, now),
        attribution: store.attribution(&asset.asset_id).map_err(ownership_core::Error::from)?.to_vec(),
        annotations: asset.annotations.clone(),
        pending_recommendations: store
            .recommendations()
            .iter()
            .filter(|r| r.is_pending() && r.recommendation.asset_id == asset.asset_id)
            .map(|r| r.recommendation.recommendation_id.clone())
            .collect(),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct RecommendationQuery {
    /// `pending` (default), `decided` or `all`.
    pub status: Option<String>,
    /// Only items delegated to this candidate.
    pub queue: Option<String>,
    #[serde(rename = "type")]
    pub asset_type: Option<String>,
}

async fn list_recommendations(
    State(st): Shared,
    caller: Caller,
    Query(q): Query<RecommendationQuery>,
    Query(page): Query<PageQuery>,
) -> AppResult<Page<RecommendationState>> {
    caller.require(Capability::Read)?;
    let keep: fn(&RecommendationState) -> bool = match q.status.as_deref().unwrap_or("pending") {
        "pending" => |r| r.is_pending(),
        "decided" => |r| !r.is_pending(),
        "all" => |_| true,
        other => return Err(ApiError::bad_request(format!("unknown status `{other}`"))),
    };
    let ty: Option<AssetType> = q.asset_type.as_deref().map(parse).transpose()?;
    let engine = st.engine.read();
    let items: Vec<(u64, RecommendationState)> = engine
        .store()
        .recommendations()
        .iter()
        .filter(|r| keep(r))
        .filter(|r| ty.is_none_or(|t| r.recommendation.asset_type == t))
        .filter(|r| {
            q.queue
                .as_deref()
                .is_none_or(|c| r.queue.as_ref().is_some_and(|qc| qc.as_str() == c))
        })
        .map(|r| (r.seq, r.clone()))
        .collect();
    Ok(Json(paginate(items, &page)?))
}

async fn get_recommendation(State(st): Shared, caller: Caller, Path(id): Path<String>) -> AppResult<RecommendationState> {
    caller.require(Capability::Read)?;
    let engine = st.engine.read();
    engine
        .store()
        .recommendation(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown recommendation `{id}`")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IssueRequest {
    pub asset_id: AssetId,
}

async fn issue_recommendation(State(st): Shared, caller: Caller, Json(req): Json<IssueRequest>) -> AppResult<Recommendation> {
    caller.require(Capability::Train)?;
    let mut engine = st.engine.write();
    let now = st.now(&engine);
    Ok(Json(engine.issue_recommendation(&req.asset_id, now)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionChoice {
    Accept,
    Reject,
    Delegate,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub candidate_id: CandidateId,
    pub decision: DecisionChoice,
    #[serde(default)]
    pub delegate_to: Option<CandidateId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse {
    #[serde(flatten)]
    pub outcome: DecisionOutcome,
    /// Owner right after the decision.
    pub owner: Option<CandidateId>,
}

async fn decide(
    State(st): Shared,
    caller: Caller,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> AppResult<DecisionResponse> {
    caller.require(Capability::Decide)?;
    let input = match (req.decision, req.delegate_to) {
        (DecisionChoice::Accept, None) => DecisionInput::Accept,
        (DecisionChoice::Reject, None) => DecisionInput::Reject,
        (DecisionChoice::Delegate, Some(to)) => DecisionInput::Delegate(to),
        (DecisionChoice::Delegate, None) => return Err(ApiError::bad_request("Delegate needs delegate_to")),
        (_, Some(_)) => return Err(ApiError::bad_request("delegate_to is only valid with Delegate")),
    };
    let mut engine = st.engine.write();
    let now = st.now(&engine);
    let actor = &caller.0.actor_id;
    if let Err(e) = engine.check_decider(actor, now) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "actor_not_allowed", e.to_string()));
    }
    if let DecisionInput::Delegate(to) = &input {
        engine.check_delegate_target(to, now)?;
    }
    let outcome = engine.apply_decision(&id, &req.candidate_id, input, actor, now)?;
    let owner = engine
        .store()
        .current_owner(&outcome.decision.asset_id, now)
        .ok()
        .flatten()
        .cloned();
    Ok(Json(DecisionResponse { outcome, owner }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestRequest {
    /// Label for diagnostics, typically the file name.
    pub source: String,
    /// `commitlog`, `reviewlog` or `adminlog`.
    pub format: String,
    pub content: String,
}

async fn ingest_logs(State(st): Shared, caller: Caller, Json(req): Json<IngestRequest>) -> AppResult<IngestReport> {
    caller.require(Capability::Ingest)?;
    let format: LogFormat = req
        .format
        .parse()
        .map_err(|e: ownership_core::ingest::IngestError| ApiError::bad_request(e.to_string()))?;
    let mut engine = st.engine.write();
    Ok(Json(engine.ingest_log(&req.source, format, &req.content)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainRequest {
    pub asset_type: AssetType,
    /// `tree` (default) or `scoring`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub window_days: Option<i64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelView {
    pub model_id: String,
    pub asset_type: AssetType,
    pub kind: String,
    pub trained_at: Timestamp,
    pub schema_version: u32,
    pub metrics: TrainingMetrics,
    pub dropped_features: Vec<String>,
    /// Human-readable model card.
    pub card: String,
}

impl From<&ModelRecord> for ModelView {
    fn from(r: &ModelRecord) -> Self {
        Self {
            model_id: r.model_id.clone(),
            asset_type: r.model.asset_type(),
            kind: r.model.kind_name().to_string(),
            trained_at: r.trained_at,
            schema_version: r.model.schema_version(),
            metrics: r.model.metrics.clone(),
            dropped_features: r.model.dropped_features.clone(),
            card: r.model.to_card(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainResponse {
    #[serde(flatten)]
    pub model: ModelView,
    pub train_examples: usize,
    pub test_examples: usize,
    pub join_failures: usize,
}

pub fn model_spec(name: &str) -> Result<ModelSpec, String> {
    match name {
        "tree" => Ok(ModelSpec::default()),
        "scoring" => Ok(ModelSpec::Scoring { weight_bound: 5 }),
        other => Err(format!("unknown model `{other}` (expected tree or scoring)")),
    }
}

async fn train(State(st): Shared, caller: Caller, Json(req): Json<TrainRequest>) -> AppResult<TrainResponse> {
    caller.require(Capability::Train)?;
    let spec = model_spec(req.model.as_deref().unwrap_or("tree")).map_err(ApiError::bad_request)?;
    let config = TrainConfig {
        asset_type: req.asset_type,
        spec,
        seed: req.seed,
        split_fraction: req.split_fraction,
    };
    let work = move || -> Result<TrainResponse, ApiError> {
        let mut engine = st.engine.write();
        let now = st.now(&engine);
        let (record, dataset) = engine.train(&config, now, req.window_days)?;
        Ok(TrainResponse {
            model: ModelView::from(&record),
            train_examples: dataset.train.len(),
            test_examples: dataset.test.len(),
            join_failures: dataset.failures.len(),
        })
    };
    match tokio::task::spawn_blocking(work).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct HealthQuery {
    pub as_of: Option<String>,
}

fn as_of(engine: &Engine<FileJournal>, st: &AppState, raw: Option<&str>) -> Result<Timestamp, ApiError> {
    match raw {
        Some(s) => parse_time(s).ok_or_else(|| ApiError::bad_request(format!("bad time `{s}`"))),
        None => Ok(st.now(engine)),
    }
}

async fn get_health(State(st): Shared, caller: Caller, Query(q): Query<HealthQuery>) -> AppResult<HealthReport> {
    caller.require(Capability::Read)?;
    let engine = st.engine.read();
    let at = as_of(&engine, &st, q.as_of.as_deref())?;
    Ok(Json(health_report(engine.store(), at)))
}

#[derive(Debug, Default, Deserialize)]
pub struct ChurnQuery {
    #[serde(rename = "type")]
    pub asset_type: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
}

/// Days covered when `from` is omitted.
pub const DEFAULT_CHURN_DAYS: i64 = 90;

async fn get_churn(State(st): Shared, caller: Caller, Query(q): Query<ChurnQuery>) -> AppResult<ChurnSeries> {
    caller.require(Capability::Read)?;
    let ty: AssetType = parse(q.asset_type.as_deref().ok_or_else(|| ApiError::bad_request("`type` is required"))?)?;
    let day = |s: &str| parse_day(s).ok_or_else(|| ApiError::bad_request(format!("bad day `{s}`")));
    let engine = st.engine.read();
    let to = match q.to.as_deref() {
        Some(s) => day(s)?,
        None => day_of(st.now(&engine)),
    };
    let from = match q.from.as_deref() {
        Some(s) => day(s)?,
        None => to - DEFAULT_CHURN_DAYS + 1,
    };
    if from > to {
        return Err(ApiError::bad_request("`from` is after `to`"));
    }
    if to - from >= 36_600 {
        return Err(ApiError::bad_request("range longer than 100 years"));
    }
    Ok(Json(churn(engine.store(), ty, from, to)))
}

#[derive(Debug, Default, Deserialize)]
pub struct ModelQuery {
    #[serde(rename = "type")]
    pub asset_type: Option<String>,
}

async fn current_models(State(st): Shared, caller: Caller, Query(q): Query<ModelQuery>) -> AppResult<Vec<ModelView>> {
    caller.require(Capability::Read)?;
    let ty: Option<AssetType> = q.asset_type.as_deref().map(parse).transpose()?;
    let engine = st.engine.read();
    Ok(Json(
        AssetType::ALL
            .iter()
            .filter(|t| ty.is_none_or(|x| x == **t))
            .filter_map(|t| engine.store().current_model(*t))
            .map(ModelView::from)
            .collect(),
    ))
}
