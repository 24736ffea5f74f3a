//! Integer points tables: binned features, integer weights, integer intercept.
//!
//! Fitting: drop highly correlated columns, run logistic-loss gradient
//! descent on standardized bin indices, rescale so the largest weight hits
//! the bound, round, then scan the integer intercepts for training accuracy.

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::model::AssetType;
use crate::time::Timestamp;

pub const DEFAULT_WEIGHT_BOUND: i32 = 5;
pub const INTERCEPT_BOUND: i32 = 20;
pub const CORRELATION_LIMIT: f64 = 0.95;
pub const EPOCHS: usize = 500;
pub const STEP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoints {
    /// Bin index of `x` is the number of cuts strictly below it.
    pub cuts: Vec<f64>,
    pub weight: i32,
}

impl FeaturePoints {
    pub fn bin(&self, x: f64) -> usize {
        self.cuts.iter().filter(|&&c| x > c).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringSystemModel {
    /// One entry per schema feature; dropped features keep weight 0 and no cuts.
    pub features: Vec<FeaturePoints>,
    pub intercept: i32,
    pub weight_bound: i32,
    pub asset_type: AssetType,
    pub schema_version: u32,
    pub trained_at: Timestamp,
    pub seed: u64,
}

impl ScoringSystemModel {
    pub fn points(&self, row: &[f64]) -> i64 {
        self.features
            .iter()
            .zip(row)
            .map(|(f, &x)| f.weight as i64 * f.bin(x) as i64)
            .sum::<i64>()
            + self.intercept as i64
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.points(row) as f64)
    }

    pub fn predicts_positive(&self, row: &[f64]) -> bool {
        self.points(row) >= 0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Pearson correlation; `None` when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa.sqrt() * sbb.sqrt()))
    }
}

/// Indices of columns dropped by the correlation filter; the lower index survives.
pub fn correlated_drops(columns: &[Vec<f64>]) -> Vec<usize> {
    let mut dropped = vec![false; columns.len()];
    for j in 0..columns.len() {
        for i in 0..j {
            if dropped[i] {
                continue;
            }
            if pearson(&columns[i], &columns[j]).is_some_and(|r| r.abs() > CORRELATION_LIMIT) {
                dropped[j] = true;
                break;
            }
        }
    }
    (0..columns.len()).filter(|&j| dropped[j]).collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin cuts for one column: midpoints between distinct values when there are
/// at most four of them, otherwise the distinct quartiles below the maximum.
pub fn bin_cuts(column: &[f64]) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= 4 {
        return distinct
            .windows(2)
            .map(|w| w[0] + (w[1] - w[0]) / 2.0)
            .collect();
    }
    let max = *distinct.last().expect("non-empty");
    let mut cuts: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&p| quantile(&sorted, p))
        .filter(|&c| c < max)
        .collect();
    cuts.dedup();
    cuts
}

/// Integer intercept in `[-INTERCEPT_BOUND, INTERCEPT_BOUND]` maximizing
/// training accuracy given per-example feature points; lowest wins ties.
pub fn best_intercept(feature_points: &[i64], labels: &[bool]) -> (i32, usize) {
    let mut best = (-INTERCEPT_BOUND, 0);
    for b in -INTERCEPT_BOUND..=INTERCEPT_BOUND {
        let correct = feature_points
            .iter()
            .zip(labels)
            .filter(|&(&p, &y)| (p + b as i64 >= 0) == y)
            .count();
        if b == -INTERCEPT_BOUND || correct > best.1 {
            best = (b, correct);
        }
    }
    best
}

/// Fits the points table. Returns the model and the dropped column indices.
pub fn fit_scoring(
    rows: &[&[f64]],
    labels: &[bool],
    weight_bound: i32,
) -> Result<(Vec<FeaturePoints>, i32, Vec<usize>), LearnError> {
    if rows.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if rows.len() != labels.len() {
        return Err(LearnError::InvalidParameter(
            "rows and labels differ in length".into(),
        ));
    }
    if weight_bound < 1 {
        return Err(LearnError::InvalidParameter(format!(
            "weight bound {weight_bound} must be at least 1"
        )));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(LearnError::InvalidParameter("ragged feature rows".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        log::warn!("single-class training set for scoring system");
    }
    let n = rows.len();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let dropped = correlated_drops(&columns);

    let mut features: Vec<FeaturePoints> = Vec::with_capacity(d);
    let mut z_cols: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(d);
    for (j, col) in columns.iter().enumerate() {
        if dropped.contains(&j) {
            features.push(FeaturePoints {
                cuts: Vec::new(),
                weight: 0,
            });
            z_cols.push(None);
            continue;
        }
        let fp = FeaturePoints {
            cuts: bin_cuts(col),
            weight: 0,
        };
        let bins: Vec<f64> = col.iter().map(|&x| fp.bin(x) as f64).collect();
        let mean = bins.iter().sum::<f64>() / n as f64;
        let var = bins.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n as f64;
        features.push(fp);
        if var > 0.0 {
            let sd = var.sqrt();
            z_cols.push(Some((bins.iter().map(|b| (b - mean) / sd).collect(), sd)));
        } else {
            z_cols.push(None);
        }
    }
    if z_cols.iter().all(Option::is_none) {
        return Err(LearnError::DegenerateFeatures);
    }

    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let mut w = vec![0.0; d];
    let mut b0 = 0.0;
    let mut margin = vec![0.0; n];
    for _ in 0..EPOCHS {
        margin.fill(b0);
        for (j, z) in z_cols.iter().enumerate() {
            if let Some((z, _)) = z {
                for (m, &zi) in margin.iter_mut().zip(z) {
                    *m += w[j] * zi;
                }
            }
        }
        let resid: Vec<f64> = margin.iter().zip(&y).map(|(&m, &t)| sigmoid(m) - t).collect();
        for (j, z) in z_cols.iter().enumerate() {
            if let Some((z, _)) = z {
                let g = resid.iter().zip(z).map(|(r, zi)| r * zi).sum::<f64>() / n as f64;
                w[j] -= STEP * g;
            }
        }
        b0 -= STEP * resid.iter().sum::<f64>() / n as f64;
    }

    let raw: Vec<f64> = z_cols
        .iter()
        .enumerate()
        .map(|(j, z)| z.as_ref().map_or(0.0, |(_, sd)| w[j] / sd))
        .collect();
    let max_abs = raw.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if max_abs > 0.0 {
        let scale = weight_bound as f64 / max_abs;
        for (f, r) in features.iter_mut().zip(&raw) {
            f.weight = ((r * scale).round() as i32).clamp(-weight_bound, weight_bound);
        }
    }

    let feature_points: Vec<i64> = rows
        .iter()
        .map(|r| {
            features
                .iter()
                .zip(r.iter())
                .map(|(f, &x)| f.weight as i64 * f.bin(x) as i64)
                .sum()
        })
        .collect();
    let (intercept, _) = best_intercept(&feature_points, labels);
    Ok((features, intercept, dropped))
}
