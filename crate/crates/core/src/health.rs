//! Ownership-health snapshot and daily churn series.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::store::count_before;
use crate::model::{Action, AssetId, AssetType, Store};
use crate::recommend::Band;
use crate::time::{day_of, format_day, Timestamp, DAY};

pub const STALE_AFTER_DAYS: i64 = 180;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthCounts {
    pub live_assets: usize,
    pub unowned_count: usize,
    pub stale_owner_count: usize,
    /// Live assets with at least one recommendation issued at or before `as_of`.
    pub recommended_assets: usize,
    pub inconclusive_count: usize,
    pub inconclusive_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeHealth {
    pub asset_type: AssetType,
    #[serde(flatten)]
    pub counts: HealthCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub as_of: Timestamp,
    pub stale_after_days: i64,
    #[serde(flatten)]
    pub totals: HealthCounts,
    pub by_type: Vec<TypeHealth>,
}

impl HealthReport {
    pub fn unowned_count(&self) -> usize {
        self.totals.unowned_count
    }

    pub fn stale_owner_count(&self) -> usize {
        self.totals.stale_owner_count
    }

    pub fn inconclusive_rate(&self) -> f64 {
        self.totals.inconclusive_rate
    }
}

#[derive(Default)]
struct Tally {
    live: usize,
    unowned: usize,
    stale: usize,
    recommended: usize,
    inconclusive: usize,
}

impl Tally {
    fn counts(&self) -> HealthCounts {
        HealthCounts {
            live_assets: self.live,
            unowned_count: self.unowned,
            stale_owner_count: self.stale,
            recommended_assets: self.recommended,
            inconclusive_count: self.inconclusive,
            inconclusive_rate: if self.recommended == 0 {
                0.0
            } else {
                self.inconclusive as f64 / self.recommended as f64
            },
        }
    }
}

/// Health of live assets at `as_of` (created ≤ as_of < deleted).
///
/// An owned asset is stale when its owner has no interaction with it in
/// `[as_of - stale_after_days, as_of]`. The inconclusive rate is taken over
/// assets whose latest recommendation issued at or before `as_of` exists.
pub fn health_report_with(store: &Store, as_of: Timestamp, stale_after_days: i64) -> HealthReport {
    let latest_band = latest_bands(store, as_of);
    let stale_from = as_of - stale_after_days * DAY;
    let mut totals = Tally::default();
    let mut per_type: HashMap<AssetType, Tally> = HashMap::new();
    for ix in 0..store.asset_count() {
        let state = store.asset_at(ix);
        let asset = &state.asset;
        if !asset.is_live_at(as_of) {
            continue;
        }
        let owner = store
            .current_owner(&asset.asset_id, as_of)
            .expect("asset exists");
        let (unowned, stale) = match owner {
            None => (true, false),
            Some(o) => {
                let cix = store.candidate_ix(o).expect("owner registered");
                let recent = state.actors.get(&cix).map_or(0, |t| {
                    count_before(&t.all, as_of + 1) - count_before(&t.all, stale_from)
                });
                (false, recent == 0)
            }
        };
        let band = latest_band.get(&asset.asset_id);
        for t in [&mut totals, per_type.entry(asset.asset_type).or_default()] {
            t.live += 1;
            t.unowned += unowned as usize;
            t.stale += stale as usize;
            if let Some(b) = band {
                t.recommended += 1;
                t.inconclusive += (*b == Band::Inconclusive) as usize;
            }
        }
    }
    HealthReport {
        as_of,
        stale_after_days,
        totals: totals.counts(),
        by_type: AssetType::ALL
            .iter()
            .map(|&t| TypeHealth {
                asset_type: t,
                counts: per_type.get(&t).map(Tally::counts).unwrap_or_default(),
            })
            .collect(),
    }
}

pub fn health_report(store: &Store, as_of: Timestamp) -> HealthReport {
    health_report_with(store, as_of, STALE_AFTER_DAYS)
}

/// Band of the latest recommendation per asset issued at or before `as_of`.
fn latest_bands(store: &Store, as_of: Timestamp) -> HashMap<&AssetId, Band> {
    let mut out: HashMap<&AssetId, (Timestamp, Band)> = HashMap::new();
    for r in store.recommendations() {
        let rec = &r.recommendation;
        if rec.as_of > as_of {
            continue;
        }
        // Later-issued wins among equal as_of (log order).
        match out.get(&rec.asset_id) {
            Some(&(t, _)) if t > rec.as_of => {}
            _ => {
                out.insert(&rec.asset_id, (rec.as_of, rec.band));
            }
        }
    }
    out.into_iter().map(|(k, (_, b))| (k, b)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnBucket {
    /// Days since the Unix epoch (UTC).
    pub day: i64,
    pub date: String,
    pub added: usize,
    pub deleted: usize,
    pub changed: usize,
    pub owner_changes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnSeries {
    pub asset_type: AssetType,
    pub from_day: i64,
    pub to_day: i64,
    pub buckets: Vec<ChurnBucket>,
}

/// Per UTC day in `[from_day, to_day]`: assets created, deleted, modified
/// at least once, and assets with at least one ownership change.
pub fn churn(store: &Store, asset_type: AssetType, from_day: i64, to_day: i64) -> ChurnSeries {
    let len = if to_day >= from_day {
        (to_day - from_day + 1) as usize
    } else {
        0
    };
    let slot = |t: Timestamp| {
        let d = day_of(t);
        (d >= from_day && d <= to_day).then(|| (d - from_day) as usize)
    };
    let mut added = vec![0; len];
    let mut deleted = vec![0; len];
    let mut changed: Vec<HashSet<&AssetId>> = vec![HashSet::new(); len];
    let mut owners: Vec<HashSet<&AssetId>> = vec![HashSet::new(); len];
    for a in store.assets().filter(|a| a.asset_type == asset_type) {
        if let Some(i) = slot(a.created_at) {
            added[i] += 1;
        }
        if let Some(i) = a.deleted_at.and_then(slot) {
            deleted[i] += 1;
        }
    }
    let of_type = |id: &AssetId| store.asset(id).is_some_and(|a| a.asset_type == asset_type);
    for ev in store.interactions() {
        if ev.action == Action::Modify && of_type(ev.asset_id) {
            if let Some(i) = slot(ev.at) {
                changed[i].insert(ev.asset_id);
            }
        }
    }
    for c in store.owner_changes() {
        if of_type(&c.asset_id) {
            if let Some(i) = slot(c.at) {
                owners[i].insert(&c.asset_id);
            }
        }
    }
    let buckets = (0..len)
        .map(|i| {
            let day = from_day + i as i64;
            ChurnBucket {
                day,
                date: format_day(day),
                added: added[i],
                deleted: deleted[i],
                changed: changed[i].len(),
                owner_changes: owners[i].len(),
            }
        })
        .collect();
    ChurnSeries {
        asset_type,
        from_day,
        to_day,
        buckets,
    }
}

pub fn write_churn_tsv<W: Write>(out: &mut W, series: &ChurnSeries) -> io::Result<()> {
    writeln!(out, "date\tasset_type\tadded\tdeleted\tchanged\towner_changes")?;
    for b in &series.buckets {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            b.date, series.asset_type, b.added, b.deleted, b.changed, b.owner_changes
        )?;
    }
    Ok(())
}

pub fn write_health_tsv<W: Write>(out: &mut W, report: &HealthReport) -> io::Result<()> {
    writeln!(
        out,
        "scope\tlive_assets\tunowned\tstale_owner\trecommended\tinconclusive\tinconclusive_rate"
    )?;
    let rows = std::iter::once(("all".to_string(), &report.totals)).chain(
        report
            .by_type
            .iter()
            .map(|t| (t.asset_type.to_string(), &t.counts)),
    );
    for (scope, c) in rows {
        writeln!(
            out,
            "{scope}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
            c.live_assets,
            c.unowned_count,
            c.stale_owner_count,
            c.recommended_assets,
            c.inconclusive_count,
            c.inconclusive_rate
        )?;
    }
    Ok(())
}
