//! Synthetic organizations with planted owners.
//!
//! Each asset has a maintainer who touches it at `lambda_own` events per day
//! while a handful of contributors touch it at `lambda_other`. Reorgs move
//! individuals to other teams and hand their assets to former teammates. An
//! optional drift day switches the owning policy: from then on the true owner
//! of every asset, including ones created later, is its secondary maintainer
//! (a contributor who starts touching it at `lambda_drift`), while the
//! original maintainer keeps working on it.
//! Drift is not recorded as transfers; the mapping catches up only through
//! review decisions.
//!
//! Reviews propose a uniformly chosen shortlist member and the oracle labeler
//! accepts it exactly when it is the true owner (flipped with probability
//! `label_noise`). Interactions go through the real log parsers and
//! annotations through the real directive scanner.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DecisionInput, Engine};
use crate::error::Error;
use crate::featurize::compute_features;
use crate::ingest::LogFormat;
use crate::labeling::{build_dataset, events_for_type, extract_labeling_events};
use crate::learn::{
    accuracy, auc, predict, retrain_windowed, train_from_events, LearnError, ModelRecord,
    ModelSpec, TrainConfig,
};
use crate::model::{
    Asset, AssetId, AssetType, AttributionSource, CandidateId, CandidateType, DependencyEdge,
    EdgeKind, OrgKind, OrgNode, OrgNodeId, OwnerCandidate, Store,
};
use crate::persist::MemoryJournal;
use crate::recommend::{shortlist, Band, BandThresholds};
use crate::time::{format_iso, parse_time, Timestamp, DAY};

/// 2024-01-01T00:00:00Z
pub const SIM_EPOCH: Timestamp = 1_704_067_200;

const TEAMS_PER_ORG: usize = 5;
const REVIEW_WARMUP_DAYS: i64 = 14;
const MIN_LIFETIME_DAYS: i64 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssetCounts {
    pub source_file: usize,
    pub warehouse_table: usize,
    pub config_file: usize,
}

impl Default for AssetCounts {
    fn default() -> Self {
        Self {
            source_file: 1000,
            warehouse_table: 500,
            config_file: 500,
        }
    }
}

impl AssetCounts {
    pub fn total(&self) -> usize {
        self.source_file + self.warehouse_table + self.config_file
    }

    pub fn get(&self, t: AssetType) -> usize {
        match t {
            AssetType::SourceFile => self.source_file,
            AssetType::WarehouseTable => self.warehouse_table,
            AssetType::ConfigFile => self.config_file,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reorg {
    pub day: i64,
    /// Fraction of all individuals moved to another team.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub teams: usize,
    pub individuals_per_team: usize,
    pub assets: AssetCounts,
    pub horizon_days: i64,
    /// Assets are created during the first `creation_days` of the horizon
    /// (default: a quarter of it).
    pub creation_days: Option<i64>,
    /// Days of history before the horizon during which assets may already
    /// exist and be worked on. Reviews only happen inside the horizon.
    pub history_days: i64,
    pub lambda_own: f64,
    pub lambda_other: f64,
    /// Daily rate of the secondary maintainer after the drift day.
    pub lambda_drift: f64,
    pub contributors_per_asset: usize,
    pub annotation_coverage: f64,
    pub annotation_noise: f64,
    pub reorgs: Vec<Reorg>,
    pub drift_day: Option<i64>,
    pub reviews_per_asset: usize,
    pub label_noise: f64,
    pub deletion_fraction: f64,
    pub edges_per_asset: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            teams: 20,
            individuals_per_team: 8,
            assets: AssetCounts::default(),
            horizon_days: 180,
            creation_days: None,
            history_days: 0,
            lambda_own: 1.0,
            lambda_other: 0.05,
            lambda_drift: 0.3,
            contributors_per_asset: 6,
            annotation_coverage: 0.8,
            annotation_noise: 0.05,
            reorgs: Vec::new(),
            drift_day: None,
            reviews_per_asset: 3,
            label_noise: 0.0,
            deletion_fraction: 0.03,
            edges_per_asset: 2,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let config: SimConfig =
            toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        for (name, r) in [
            ("lambda_own", self.lambda_own),
            ("lambda_other", self.lambda_other),
            ("lambda_drift", self.lambda_drift),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("{name} must be positive, got {r}"));
            }
        }
        if self.lambda_own <= self.lambda_other {
            return bad("lambda_own must exceed lambda_other".into());
        }
        for (name, f) in [
            ("annotation_coverage", self.annotation_coverage),
            ("annotation_noise", self.annotation_noise),
            ("label_noise", self.label_noise),
            ("deletion_fraction", self.deletion_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must be in [0, 1], got {f}"));
            }
        }
        if self.horizon_days <= 0 {
            return bad("horizon_days must be positive".into());
        }
        if self.creation_days.is_some_and(|d| d <= 0 || d > self.horizon_days) {
            return bad("creation_days must be in (0, horizon_days]".into());
        }
        if self.history_days < 0 {
            return bad("history_days must not be negative".into());
        }
        if self.assets.total() > 0 && self.teams * self.individuals_per_team == 0 {
            return bad("assets need at least one individual".into());
        }
        for r in &self.reorgs {
            if !(0.0..=1.0).contains(&r.fraction) {
                return bad(format!("reorg fraction {} outside [0, 1]", r.fraction));
            }
            if r.day < 0 || r.day >= self.horizon_days {
                return bad(format!("reorg day {} outside the horizon", r.day));
            }
            if r.fraction > 0.0 && self.teams < 2 {
                return bad("reorgs need at least two teams".into());
            }
        }
        if let Some(d) = self.drift_day {
            if d < 0 || d >= self.horizon_days {
                return bad(format!("drift day {d} outside the horizon"));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Timestamp {
        SIM_EPOCH
    }

    pub fn end(&self) -> Timestamp {
        SIM_EPOCH + self.horizon_days * DAY
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSpan {
    pub from: Timestamp,
    pub owner: CandidateId,
}

/// Planted owner of every asset over time (piecewise constant).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub owners: BTreeMap<AssetId, Vec<TruthSpan>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn owner_at(&self, asset: &AssetId, at: Timestamp) -> Option<&CandidateId> {
        let spans = self.owners.get(asset)?;
        spans.iter().rev().find(|s| s.from <= at).map(|s| &s.owner)
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "asset_id\tfrom\towner")?;
        for (asset, spans) in &self.owners {
            for s in spans {
                writeln!(out, "{asset}\t{}\t{}", format_iso(s.from), s.owner)?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, SimError> {
        let mut truth = GroundTruth::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || SimError::InvalidConfig(format!("truth line {}: `{line}`", i + 1));
            let mut f = line.split('\t');
            let (Some(a), Some(t), Some(o), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            let from = parse_time(t).ok_or_else(bad)?;
            truth.owners.entry(AssetId::new(a)).or_default().push(TruthSpan {
                from,
                owner: CandidateId::new(o),
            });
        }
        for spans in truth.owners.values_mut() {
            spans.sort_by_key(|s| s.from);
        }
        Ok(truth)
    }
}

/// Text the pipeline ingests: the three logs and each annotated asset's payload.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimArtifacts {
    pub commitlog: String,
    pub reviewlog: String,
    pub adminlog: String,
    pub payloads: Vec<(AssetId, String)>,
}

impl SimArtifacts {
    pub fn log(&self, format: LogFormat) -> &str {
        match format {
            LogFormat::CommitLog => &self.commitlog,
            LogFormat::ReviewLog => &self.reviewlog,
            LogFormat::AdminLog => &self.adminlog,
        }
    }
}

pub struct SimOutput {
    pub config: SimConfig,
    pub engine: Engine<MemoryJournal>,
    pub truth: GroundTruth,
    pub artifacts: SimArtifacts,
}

impl SimOutput {
    pub fn store(&self) -> &Store {
        self.engine.store()
    }

    /// Writes the store log, the ingestible logs, payloads and truth table.
    pub fn write_to(&self, dir: &Path) -> Result<(), Error> {
        let io_err = crate::persist::PersistError::Io;
        std::fs::create_dir_all(dir.join("payloads")).map_err(io_err)?;
        self.engine.journal().write_to(&dir.join("store.log"))?;
        for f in LogFormat::ALL {
            std::fs::write(dir.join(log_file_name(f)), self.artifacts.log(f)).map_err(io_err)?;
        }
        for (asset, text) in &self.artifacts.payloads {
            let path = dir.join("payloads").join(asset.as_str());
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
            std::fs::write(path, text).map_err(io_err)?;
        }
        let mut truth = Vec::new();
        self.truth.write_tsv(&mut truth).map_err(io_err)?;
        std::fs::write(dir.join("truth.tsv"), truth).map_err(io_err)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml()).map_err(io_err)?;
        Ok(())
    }
}

pub fn log_file_name(format: LogFormat) -> &'static str {
    match format {
        LogFormat::CommitLog => "commitlog.tsv",
        LogFormat::ReviewLog => "reviewlog.tsv",
        LogFormat::AdminLog => "adminlog.tsv",
    }
}

struct PlannedAsset {
    id: AssetId,
    asset_type: AssetType,
    created_at: Timestamp,
    deleted_at: Option<Timestamp>,
    /// (from, person) maintainer segments.
    maintainers: Vec<(Timestamp, usize)>,
    contributors: Vec<usize>,
    drift_owner: Option<usize>,
}

impl PlannedAsset {
    fn live_at(&self, t: Timestamp) -> bool {
        self.created_at <= t && self.deleted_at.is_none_or(|d| t < d)
    }

    fn maintainer_at(&self, t: Timestamp) -> usize {
        self.maintainers
            .iter()
            .rev()
            .find(|m| m.0 <= t)
            .unwrap_or(&self.maintainers[0])
            .1
    }
}

enum Action {
    Move { person: usize, team: usize },
    Handover { asset: usize },
    Review { asset: usize },
    Delete { asset: usize },
}

fn asset_path(t: AssetType, i: usize) -> String {
    match t {
        AssetType::SourceFile => format!("src/pkg{:02}/file{i:04}.rs", i % 40),
        AssetType::WarehouseTable => format!("warehouse.table_{i:04}"),
        AssetType::ConfigFile => format!("config/service{i:04}.yaml"),
    }
}

fn person_id(i: usize) -> CandidateId {
    CandidateId::new(format!("u{i:03}"))
}

fn team_node(t: usize) -> OrgNodeId {
    OrgNodeId::new(format!("team-{t:02}"))
}

fn random_time_in_day(rng: &mut ChaCha8Rng, day_start: Timestamp) -> Timestamp {
    day_start + rng.random_range(0..DAY)
}

/// Builds a store and its planted truth. Deterministic in `config.seed`.
pub fn generate(config: &SimConfig) -> Result<SimOutput, Error> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut engine = Engine::in_memory();
    let mut artifacts = SimArtifacts::default();
    if config.assets.total() == 0 {
        return Ok(SimOutput {
            config: config.clone(),
            engine,
            truth: GroundTruth::default(),
            artifacts,
        });
    }
    let start = config.start();
    let end = config.end();

    // Org tree and individuals.
    let root = OrgNodeId::new("company");
    engine.register_org_node(OrgNode {
        node_id: root.clone(),
        parent_id: None,
        kind: OrgKind::Company,
    })?;
    for o in 0..config.teams.div_ceil(TEAMS_PER_ORG) {
        engine.register_org_node(OrgNode {
            node_id: OrgNodeId::new(format!("org-{o}")),
            parent_id: Some(root.clone()),
            kind: OrgKind::Org,
        })?;
    }
    for t in 0..config.teams {
        engine.register_org_node(OrgNode {
            node_id: team_node(t),
            parent_id: Some(OrgNodeId::new(format!("org-{}", t / TEAMS_PER_ORG))),
            kind: OrgKind::Team,
        })?;
    }
    let n_people = config.teams * config.individuals_per_team;
    let mut team_of: Vec<usize> = (0..n_people).map(|p| p / config.individuals_per_team).collect();
    for (p, &team) in team_of.iter().enumerate() {
        engine.register_candidate(
            OwnerCandidate {
                candidate_id: person_id(p),
                candidate_type: CandidateType::Individual,
                display_name: format!("Person {p}"),
                org_node_id: team_node(team),
                active: true,
            },
            start - config.history_days * DAY,
        )?;
    }

    // Asset plans.
    let create_days = config
        .creation_days
        .unwrap_or(config.horizon_days / 4)
        .max(1);
    let mut plans: Vec<PlannedAsset> = Vec::with_capacity(config.assets.total());
    for &t in AssetType::ALL {
        for i in 0..config.assets.get(t) {
            let day = rng.random_range(-config.history_days..create_days);
            let created_at = random_time_in_day(&mut rng, start + day * DAY);
            let deleted_at = if rng.random::<f64>() < config.deletion_fraction
                && day + MIN_LIFETIME_DAYS < config.horizon_days
            {
                let d = rng.random_range(day + MIN_LIFETIME_DAYS..config.horizon_days);
                Some(random_time_in_day(&mut rng, start + d * DAY))
            } else {
                None
            };
            let maintainer = rng.random_range(0..n_people);
            let team = team_of[maintainer];
            let mut contributors = Vec::new();
            let wanted = config.contributors_per_asset.min(n_people - 1);
            while contributors.len() < wanted {
                let c = if rng.random::<bool>() {
                    team * config.individuals_per_team
                        + rng.random_range(0..config.individuals_per_team)
                } else {
                    rng.random_range(0..n_people)
                };
                if c != maintainer && !contributors.contains(&c) {
                    contributors.push(c);
                }
            }
            plans.push(PlannedAsset {
                id: AssetId::new(asset_path(t, i)),
                asset_type: t,
                created_at,
                deleted_at,
                maintainers: vec![(created_at, maintainer)],
                contributors,
                drift_owner: None,
            });
        }
    }

    // Reorgs and drift reshape the truth before any event is generated.
    let mut actions: Vec<(Timestamp, u8, usize, Action)> = Vec::new();
    let mut reorgs = config.reorgs.clone();
    reorgs.sort_by_key(|r| r.day);
    for r in &reorgs {
        let at = start + r.day * DAY + DAY / 2;
        let n_move = (r.fraction * n_people as f64).round() as usize;
        let movers: Vec<usize> = index::sample(&mut rng, n_people, n_move.min(n_people)).into_vec();
        let moving: HashSet<usize> = movers.iter().copied().collect();
        let old_team = team_of.clone();
        for &p in &movers {
            let mut t = rng.random_range(0..config.teams - 1);
            if t >= old_team[p] {
                t += 1;
            }
            team_of[p] = t;
            actions.push((at, 0, p, Action::Move { person: p, team: t }));
        }
        for (ai, plan) in plans.iter_mut().enumerate() {
            if !plan.live_at(at) {
                continue;
            }
            let m = plan.maintainer_at(at);
            if !moving.contains(&m) {
                continue;
            }
            let mates: Vec<usize> = (0..n_people)
                .filter(|&q| old_team[q] == old_team[m] && !moving.contains(&q))
                .collect();
            let next = match mates.choose(&mut rng) {
                Some(&q) => q,
                None => loop {
                    let q = rng.random_range(0..n_people);
                    if !moving.contains(&q) || n_people == moving.len() {
                        break q;
                    }
                },
            };
            if next != m {
                plan.maintainers.push((at, next));
                if !plan.contributors.contains(&m) {
                    plan.contributors.push(m);
                }
                actions.push((at, 1, ai, Action::Handover { asset: ai }));
            }
        }
    }
    let drift_at = config.drift_day.map(|d| start + d * DAY);
    if let Some(at) = drift_at {
        for plan in plans.iter_mut().filter(|p| p.deleted_at.is_none_or(|d| d > at)) {
            let m = plan.maintainer_at(at.max(plan.created_at));
            let candidates: Vec<usize> = plan.contributors.iter().copied().filter(|&c| c != m).collect();
            let same_team: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| team_of[c] == team_of[m])
                .collect();
            let pool = if same_team.is_empty() { &candidates } else { &same_team };
            plan.drift_owner = pool.choose(&mut rng).copied();
        }
    }
    let truth_of = |plan: &PlannedAsset, t: Timestamp| -> usize {
        match (drift_at, plan.drift_owner) {
            (Some(d), Some(o)) if t >= d => o,
            _ => plan.maintainer_at(t),
        }
    };

    // Registration, annotations and initial attribution.
    for plan in &plans {
        engine.register_asset(Asset::new(
            plan.id.clone(),
            plan.asset_type,
            plan.id.as_str(),
            plan.created_at,
        ))?;
    }
    for plan in &plans {
        if rng.random::<f64>() >= config.annotation_coverage {
            continue;
        }
        let truth = truth_of(plan, plan.created_at);
        let named = if rng.random::<f64>() < config.annotation_noise && n_people > 1 {
            let mut q = rng.random_range(0..n_people - 1);
            if q >= truth {
                q += 1;
            }
            q
        } else {
            truth
        };
        let text = payload(plan.asset_type, &person_id(named));
        engine.scan_annotations(&plan.id, &text, plan.created_at)?;
        engine.transfer_owner(
            &plan.id,
            &person_id(named),
            plan.created_at,
            AttributionSource::Annotation,
            None,
        )?;
        artifacts.payloads.push((plan.id.clone(), text));
    }

    // Dependencies, preferring assets maintained by the same team.
    let mut by_team: Vec<Vec<usize>> = vec![Vec::new(); config.teams];
    for (ai, plan) in plans.iter().enumerate() {
        by_team[team_of_initial(plan, config)].push(ai);
    }
    for ai in 0..plans.len() {
        let team = team_of_initial(&plans[ai], config);
        let mut chosen = HashSet::new();
        for _ in 0..config.edges_per_asset {
            let bj = if rng.random::<f64>() < 0.7 {
                *by_team[team].choose(&mut rng).expect("team has this asset")
            } else {
                rng.random_range(0..plans.len())
            };
            if bj == ai || !chosen.insert(bj) {
                continue;
            }
            let (a, b) = (&plans[ai], &plans[bj]);
            let recorded_at = a.created_at.max(b.created_at);
            if !b.live_at(recorded_at) || !a.live_at(recorded_at) {
                continue;
            }
            engine.record_dependency(DependencyEdge {
                from_asset_id: a.id.clone(),
                to_asset_id: b.id.clone(),
                edge_kind: match a.asset_type {
                    AssetType::WarehouseTable => EdgeKind::Usage,
                    AssetType::ConfigFile => EdgeKind::FeatureMapping,
                    AssetType::SourceFile => EdgeKind::Build,
                },
                recorded_at,
            })?;
        }
    }

    // Interaction logs.
    let mut lines: [Vec<(Timestamp, String)>; 3] = Default::default();
    for plan in &plans {
        let mut actors: Vec<usize> = plan.contributors.clone();
        for &(_, m) in &plan.maintainers {
            if !actors.contains(&m) {
                actors.push(m);
            }
        }
        if let Some(o) = plan.drift_owner {
            if !actors.contains(&o) {
                actors.push(o);
            }
        }
        actors.sort_unstable();
        let first_day = (plan.created_at - start).div_euclid(DAY);
        let last = plan.deleted_at.unwrap_or(end);
        for day in first_day..config.horizon_days {
            let day_start = start + day * DAY;
            if day_start >= last {
                break;
            }
            let m = plan.maintainer_at(day_start);
            let drifting = drift_at.is_some_and(|d| day_start >= d);
            for &a in &actors {
                let rate = if a == m {
                    config.lambda_own
                } else if drifting && plan.drift_owner == Some(a) {
                    config.lambda_drift
                } else {
                    config.lambda_other
                };
                let n = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
                for _ in 0..n {
                    let at = random_time_in_day(&mut rng, day_start);
                    if at < plan.created_at || at >= last {
                        continue;
                    }
                    let (format, extra) = touch(&mut rng, plan.asset_type);
                    let line = format!("{}\t{}\t{}\t{}", format_iso(at), person_id(a), plan.id, extra);
                    lines[format as usize].push((at, line));
                }
            }
        }
    }
    for (i, format) in [LogFormat::CommitLog, LogFormat::ReviewLog, LogFormat::AdminLog]
        .into_iter()
        .enumerate()
    {
        let mut l = std::mem::take(&mut lines[i]);
        l.sort();
        let mut text = String::new();
        for (_, line) in &l {
            text.push_str(line);
            text.push('\n');
        }
        match format {
            LogFormat::CommitLog => artifacts.commitlog = text,
            LogFormat::ReviewLog => artifacts.reviewlog = text,
            LogFormat::AdminLog => artifacts.adminlog = text,
        }
        let report = engine.ingest_log(log_file_name(format), format, artifacts.log(format))?;
        debug_assert!(report.diagnostics.is_empty());
    }

    // Reviews and the rest of the timeline, in time order.
    for (ai, plan) in plans.iter().enumerate() {
        let from = (plan.created_at + REVIEW_WARMUP_DAYS * DAY).max(start);
        let to = plan.deleted_at.unwrap_or(end);
        if from >= to {
            continue;
        }
        for _ in 0..config.reviews_per_asset {
            actions.push((rng.random_range(from..to), 2, ai, Action::Review { asset: ai }));
        }
        if let Some(d) = plan.deleted_at {
            actions.push((d, 3, ai, Action::Delete { asset: ai }));
        }
    }
    actions.sort_by_key(|a| (a.0, a.1, a.2));
    for (at, _, _, action) in actions {
        match action {
            Action::Move { person, team } => {
                engine.update_candidate(&person_id(person), at, &team_node(team), true)?;
            }
            Action::Handover { asset } => {
                let plan = &plans[asset];
                let store = engine.store();
                let owner = store.current_owner(&plan.id, at)?.cloned();
                let previous = person_id(plan.maintainer_at(at - 1));
                let next = person_id(truth_of(plan, at));
                if owner.as_ref() == Some(&previous) && owner.as_ref() != Some(&next) {
                    engine.transfer_owner(
                        &plan.id,
                        &next,
                        at,
                        AttributionSource::HumanDecision,
                        Some(next.clone()),
                    )?;
                }
            }
            Action::Review { asset } => {
                let plan = &plans[asset];
                let list = shortlist(engine.store(), &plan.id, at)?;
                let Some(proposal) = list.choose(&mut rng).cloned() else {
                    continue;
                };
                let truth = person_id(truth_of(plan, at));
                let accept = (proposal == truth) != (rng.random::<f64>() < config.label_noise);
                let decision = if accept {
                    DecisionInput::Accept
                } else {
                    DecisionInput::Reject
                };
                engine.record_decision(&plan.id, &proposal, decision, &truth, at)?;
            }
            Action::Delete { asset } => {
                engine.delete_asset(&plans[asset].id, at)?;
            }
        }
    }

    let mut truth = GroundTruth::default();
    for plan in &plans {
        let mut points: Vec<Timestamp> = plan.maintainers.iter().map(|m| m.0).collect();
        if let (Some(d), Some(_)) = (drift_at, plan.drift_owner) {
            points.push(d.max(plan.created_at));
        }
        points.sort_unstable();
        let mut spans: Vec<TruthSpan> = Vec::new();
        for p in points {
            let owner = person_id(truth_of(plan, p));
            if spans.last().is_none_or(|s| s.owner != owner) {
                spans.push(TruthSpan { from: p, owner });
            }
        }
        truth.owners.insert(plan.id.clone(), spans);
    }
    Ok(SimOutput {
        config: config.clone(),
        engine,
        truth,
        artifacts,
    })
}

fn team_of_initial(plan: &PlannedAsset, config: &SimConfig) -> usize {
    plan.maintainers[0].1 / config.individuals_per_team
}

fn payload(t: AssetType, owner: &CandidateId) -> String {
    match t {
        AssetType::SourceFile => format!("// OWNER: {owner}\nfn main() {{}}\n"),
        AssetType::ConfigFile => format!("# OWNER: {owner}\nreplicas: 3\n"),
        AssetType::WarehouseTable => format!("-- OWNER: {owner}\nCREATE TABLE t (id BIGINT);\n"),
    }
}

/// Picks the log a touch lands in and its last field.
fn touch(rng: &mut ChaCha8Rng, t: AssetType) -> (LogFormat, String) {
    let x: f64 = rng.random();
    let review = |rng: &mut ChaCha8Rng| {
        let v = ["approve", "request_changes", "comment"];
        (LogFormat::ReviewLog, v.choose(rng).expect("non-empty").to_string())
    };
    let commit = |rng: &mut ChaCha8Rng| (LogFormat::CommitLog, rng.random_range(1..200u32).to_string());
    match t {
        AssetType::WarehouseTable => {
            if x < 0.5 {
                let v = ["grant", "alter", "backfill", "retention"];
                (LogFormat::AdminLog, v.choose(rng).expect("non-empty").to_string())
            } else if x < 0.8 {
                commit(rng)
            } else {
                review(rng)
            }
        }
        _ => {
            if x < 0.6 {
                commit(rng)
            } else {
                review(rng)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub as_of: Timestamp,
    /// Live assets with a planted owner and a model for their type.
    pub evaluated: usize,
    /// Live assets skipped for lack of a model.
    pub skipped: usize,
    pub top1_accuracy: f64,
    pub top3_accuracy: f64,
    /// Over all shortlisted (asset, candidate) pairs, truth as the label.
    pub auc: Option<f64>,
    pub inconclusive_rate: f64,
}

/// Ranks each live asset's shortlist with the model for its type and
/// compares with the planted owner at `as_of`.
pub fn evaluate(
    store: &Store,
    truth: &GroundTruth,
    models: &[&ModelRecord],
    as_of: Timestamp,
    thresholds: &BandThresholds,
) -> Result<EvalMetrics, Error> {
    evaluate_with(store, truth, as_of, thresholds, |asset, candidate| {
        let Some(model) = models.iter().find(|r| r.model.asset_type() == asset.asset_type) else {
            return Ok(None);
        };
        let fv = compute_features(store, &asset.asset_id, candidate, as_of)?;
        Ok(Some(predict(&model.model, &fv)?))
    })
}

/// [`evaluate`] with an arbitrary scorer; `None` skips the asset.
pub fn evaluate_with<F>(
    store: &Store,
    truth: &GroundTruth,
    as_of: Timestamp,
    thresholds: &BandThresholds,
    mut score: F,
) -> Result<EvalMetrics, Error>
where
    F: FnMut(&Asset, &CandidateId) -> Result<Option<f64>, Error>,
{
    let mut m = EvalMetrics {
        as_of,
        ..Default::default()
    };
    let (mut top1, mut top3, mut inconclusive) = (0usize, 0usize, 0usize);
    let mut pairs = Vec::new();
    'assets: for asset in store.assets().filter(|a| a.is_live_at(as_of)) {
        let Some(owner) = truth.owner_at(&asset.asset_id, as_of) else {
            continue;
        };
        let mut ranked = Vec::new();
        for c in shortlist(store, &asset.asset_id, as_of)? {
            match score(asset, &c)? {
                Some(s) => ranked.push((c, s)),
                None => {
                    m.skipped += 1;
                    continue 'assets;
                }
            }
        }
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        m.evaluated += 1;
        match ranked.iter().position(|(c, _)| c == owner) {
            Some(0) => {
                top1 += 1;
                top3 += 1;
            }
            Some(r) if r < 3 => top3 += 1,
            _ => {}
        }
        let scores: Vec<f64> = ranked.iter().map(|r| r.1).collect();
        inconclusive += (thresholds.band(&scores) == Band::Inconclusive) as usize;
        pairs.extend(ranked.iter().map(|(c, s)| (*s, c == owner)));
    }
    if m.evaluated > 0 {
        let n = m.evaluated as f64;
        m.top1_accuracy = top1 as f64 / n;
        m.top3_accuracy = top3 as f64 / n;
        m.inconclusive_rate = inconclusive as f64 / n;
    }
    m.auc = auc(&pairs);
    Ok(m)
}

/// Shortlist scored by `model`, best first, ties by candidate id.
pub fn rank_shortlist(
    store: &Store,
    asset_id: &AssetId,
    as_of: Timestamp,
    model: &ModelRecord,
) -> Result<Vec<(CandidateId, f64)>, Error> {
    let mut out = Vec::new();
    for c in shortlist(store, asset_id, as_of)? {
        let fv = compute_features(store, asset_id, &c, as_of)?;
        let s = predict(&model.model, &fv)?;
        out.push((c, s));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Time of the first labeling event after the earliest ⌈fraction·n⌉ events
/// before `until`. Training on events strictly before it uses that prefix.
pub fn labeling_split_time(store: &Store, until: Timestamp, fraction: f64) -> Option<Timestamp> {
    let events = extract_labeling_events(store, Timestamp::MIN, until);
    let k = (fraction * events.len() as f64).ceil() as usize;
    events.get(k).map(|e| e.at)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub split_at: Timestamp,
    pub model_ids: Vec<String>,
    pub metrics: EvalMetrics,
}

/// Trains one model per asset type on the earliest `train_fraction` of the
/// labeling events, then evaluates against the planted owners at the end of
/// the horizon. Types without labeling events are skipped.
pub fn train_and_evaluate(
    out: &mut SimOutput,
    spec: &ModelSpec,
    train_fraction: f64,
) -> Result<PipelineReport, Error> {
    let end = out.config.end();
    let split_at = labeling_split_time(out.store(), end, train_fraction).unwrap_or(end);
    let mut models = Vec::new();
    for &t in AssetType::ALL {
        let config = TrainConfig {
            asset_type: t,
            spec: spec.clone(),
            seed: out.config.seed,
            split_fraction: None,
        };
        match out.engine.train(&config, split_at, None) {
            Ok((record, _)) => models.push(record),
            Err(Error::Learn(LearnError::EmptyTrainingSet)) => {}
            Err(e) => return Err(e),
        }
    }
    let refs: Vec<&ModelRecord> = models.iter().collect();
    let metrics = evaluate(out.store(), &out.truth, &refs, end, &out.engine.thresholds)?;
    Ok(PipelineReport {
        split_at,
        model_ids: models.into_iter().map(|m| m.model_id).collect(),
        metrics,
    })
}

/// Default configuration with a policy switch at day 90. The history starts
/// 180 days before the horizon and new assets stop after 30 days, so the
/// feature distributions before and after the switch look alike.
pub fn drift_config(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        drift_day: Some(90),
        history_days: 180,
        creation_days: Some(30),
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftOutcome {
    pub split_at: Timestamp,
    pub all_history_examples: usize,
    pub window_examples: usize,
    pub test_examples: usize,
    pub all_history_accuracy: f64,
    pub window_accuracy: f64,
}

/// Splits the labeling events of `asset_type` at the `train_fraction` point,
/// trains on everything before the split and on the last `window_days`
/// before it, and scores both on the events after the split.
pub fn drift_comparison(
    out: &SimOutput,
    asset_type: AssetType,
    window_days: i64,
    train_fraction: f64,
    spec: &ModelSpec,
) -> Result<DriftOutcome, Error> {
    let store = out.store();
    let all = events_for_type(
        store,
        &extract_labeling_events(store, Timestamp::MIN, out.config.end()),
        asset_type,
    );
    let k = (train_fraction * all.len() as f64).ceil() as usize;
    let split_at = all.get(k).ok_or(LearnError::EmptyTestSet)?.at;
    let test_events: Vec<_> = all.iter().filter(|e| e.at >= split_at).cloned().collect();
    let test = build_dataset(store, &test_events, None, out.config.seed)?.train;
    let config = TrainConfig {
        asset_type,
        spec: spec.clone(),
        seed: out.config.seed,
        split_fraction: None,
    };
    let history: Vec<_> = all.iter().filter(|e| e.at < split_at).cloned().collect();
    let (full, full_ds) = train_from_events(store, &history, &config, split_at)?;
    let (windowed, window_ds) = retrain_windowed(store, window_days, split_at, &config)?;
    Ok(DriftOutcome {
        split_at,
        all_history_examples: full_ds.train.len(),
        window_examples: window_ds.train.len(),
        test_examples: test.len(),
        all_history_accuracy: accuracy(&full, &test).ok_or(LearnError::EmptyTestSet)?,
        window_accuracy: accuracy(&windowed, &test).ok_or(LearnError::EmptyTestSet)?,
    })
}

/// Summary line for logs and the CLI.
pub fn describe(m: &EvalMetrics) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "evaluated={} skipped={} top1={:.4} top3={:.4} auc={} inconclusive_rate={:.4}",
        m.evaluated,
        m.skipped,
        m.top1_accuracy,
        m.top3_accuracy,
        m.auc.map_or("-".to_string(), |a| format!("{a:.4}")),
        m.inconclusive_rate
    );
    s
}
