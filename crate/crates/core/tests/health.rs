mod support;

use ownership_core::health::{churn, health_report, write_churn_tsv, write_health_tsv};
use ownership_core::model::{Action, AssetType, AttributionSource};
use ownership_core::time::{day_of, DAY};
use support::fixture::{aid, cid, Fixture};

const SRC: AssetType = AssetType::SourceFile;

#[test]
fn empty_day_is_all_zero() {
    let mut f = Fixture::new(&[("t1", &["a"])]);
    f.asset("x.rs", SRC, 0);
    let s = churn(f.store(), SRC, 5, 7);
    assert_eq!(s.buckets.len(), 3);
    assert!(s.buckets.iter().all(|b| (b.added, b.deleted, b.changed, b.owner_changes) == (0, 0, 0, 0)));
}

#[test]
fn creation_and_transfer_on_one_day() {
    let mut f = Fixture::new(&[("t1", &["a", "b"])]);
    let t = 3 * DAY + 100;
    f.asset("x.rs", SRC, t);
    f.own("x.rs", "a", t + 1);
    f.own("x.rs", "b", t + 2);
    f.touch("a", "x.rs", Action::Modify, t + 3);
    f.touch("a", "x.rs", Action::Review, t + 4 * DAY);
    let _ = f.engine.transfer_owner(&aid("x.rs"), &cid("b"), t + 5, AttributionSource::AutoApplied, None);
    let s = churn(f.store(), SRC, 3, 7);
    let b = &s.buckets[0];
    assert_eq!((b.day, b.added, b.deleted, b.changed, b.owner_changes), (3, 1, 0, 1, 1));
    assert!(s.buckets[1..].iter().all(|b| b.changed == 0 && b.owner_changes == 0));
    assert!(churn(f.store(), AssetType::ConfigFile, 3, 3).buckets[0].added == 0);
    assert_eq!(churn(f.store(), SRC, 8, 7).buckets.len(), 0);
}

#[test]
fn deletions_count_on_their_day() {
    let mut f = Fixture::new(&[("t1", &["a"])]);
    f.asset("x.rs", SRC, 0);
    f.engine.delete_asset(&aid("x.rs"), 2 * DAY + 5).unwrap();
    let s = churn(f.store(), SRC, 0, 2);
    assert_eq!(s.buckets.iter().map(|b| b.deleted).collect::<Vec<_>>(), vec![0, 0, 1]);
}

#[test]
fn empty_store_health_is_zero() {
    let f = Fixture::new(&[("t1", &["a"])]);
    let h = health_report(f.store(), 10);
    assert_eq!((h.unowned_count(), h.stale_owner_count(), h.totals.live_assets), (0, 0, 0));
    assert_eq!(h.inconclusive_rate(), 0.0);
}

#[test]
fn one_unowned_asset() {
    let mut f = Fixture::new(&[("t1", &["a"])]);
    f.asset("x.rs", SRC, 0);
    let h = health_report(f.store(), 10);
    assert_eq!(h.unowned_count(), 1);
    let src = h.by_type.iter().find(|t| t.asset_type == SRC).unwrap();
    assert_eq!(src.counts.unowned_count, 1);
}

#[test]
fn idle_owner_becomes_stale_after_180_days() {
    let mut f = Fixture::new(&[("t1", &["a"])]);
    f.asset("x.rs", SRC, 0);
    f.own("x.rs", "a", 0);
    f.touch("a", "x.rs", Action::Modify, DAY);
    assert_eq!(health_report(f.store(), 100 * DAY).stale_owner_count(), 0);
    assert_eq!(health_report(f.store(), 182 * DAY).stale_owner_count(), 1);
}

#[test]
fn reports_render_as_text() {
    let mut f = Fixture::new(&[("t1", &["a"])]);
    f.asset("x.rs", SRC, 0);
    let mut buf = Vec::new();
    write_health_tsv(&mut buf, &health_report(f.store(), 5)).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("unowned"));
    let mut buf = Vec::new();
    write_churn_tsv(&mut buf, &churn(f.store(), SRC, day_of(0), 2)).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
}
