//! Depth-limited binary decision trees grown greedily by Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values of a feature; a sample goes left when its value is `< threshold`.
//! Split quality is compared exactly (integer cross-multiplication), and ties
//! go to the lowest feature index, then the lowest threshold.

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::model::AssetType;
use crate::time::Timestamp;

pub const DEFAULT_MAX_DEPTH: usize = 5;
pub const DEFAULT_MIN_LEAF: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            min_leaf: DEFAULT_MIN_LEAF,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        positive_fraction: f64,
        sample_count: usize,
    },
    /// Internal nodes keep their own class balance for path attribution.
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
        positive_fraction: f64,
        sample_count: usize,
    },
}

impl TreeNode {
    pub fn positive_fraction(&self) -> f64 {
        match *self {
            TreeNode::Leaf {
                positive_fraction, ..
            }
            | TreeNode::Split {
                positive_fraction, ..
            } => positive_fraction,
        }
    }

    pub fn sample_count(&self) -> usize {
        match *self {
            TreeNode::Leaf { sample_count, .. } | TreeNode::Split { sample_count, .. } => {
                sample_count
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    /// Pre-order; `nodes[0]` is the root.
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub asset_type: AssetType,
    pub schema_version: u32,
    pub trained_at: Timestamp,
    pub seed: u64,
}

impl DecisionTreeModel {
    /// Node indices from the root to the leaf reached by `row`.
    pub fn decision_path(&self, row: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut ix = 0;
        while let TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
            ..
        } = self.nodes[ix]
        {
            ix = if row[feature_index] < threshold {
                left
            } else {
                right
            };
            path.push(ix);
        }
        path
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        *self.decision_path(row).last().expect("path is never empty")
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].positive_fraction()
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], ix: usize) -> usize {
            match nodes[ix] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
    }

    /// Feature indices used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature_index, .. } => Some(*feature_index),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Gini impurity `1 - Σ p²` of a binary node.
pub fn gini(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positives as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Σ over children of (pos² + neg²) / n, held as an exact fraction.
/// Weighted Gini is `1 - value / n_parent`, so larger is better.
#[derive(Clone, Copy, Debug)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn split(pl: usize, l: usize, pr: usize, r: usize) -> Self {
        let (pl, l, pr, r) = (pl as u128, l as u128, pr as u128, r as u128);
        let a = pl * pl + (l - pl) * (l - pl);
        let b = pr * pr + (r - pr) * (r - pr);
        Purity {
            num: a * r + b * l,
            den: l * r,
        }
    }

    fn node(p: usize, n: usize) -> Self {
        let (p, n) = (p as u128, n as u128);
        Purity {
            num: p * p + (n - p) * (n - p),
            den: n,
        }
    }

    fn beats(&self, other: &Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// A chosen split: feature, threshold and left-child size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature_index: usize,
    pub threshold: f64,
    pub left_count: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if a < t {
        t
    } else {
        b
    }
}

/// Best admissible split of `idx`, or `None` when no split keeps both
/// children at `min_leaf` or improves on the parent's impurity.
fn best_split(
    rows: &[&[f64]],
    labels: &[bool],
    idx: &[usize],
    min_leaf: usize,
    n_features: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    let total_pos = idx.iter().filter(|&&i| labels[i]).count();
    let parent = Purity::node(total_pos, n);
    let mut best: Option<(Purity, SplitChoice)> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let mut left_pos = 0;
        for k in 0..n - 1 {
            if labels[order[k]] {
                left_pos += 1;
            }
            let (lo, hi) = (rows[order[k]][f], rows[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let l = k + 1;
            let r = n - l;
            if l < min_leaf || r < min_leaf {
                continue;
            }
            let score = Purity::split(left_pos, l, total_pos - left_pos, r);
            if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
                best = Some((
                    score,
                    SplitChoice {
                        feature_index: f,
                        threshold: midpoint(lo, hi),
                        left_count: l,
                    },
                ));
            }
        }
    }
    best.filter(|(score, _)| score.beats(&parent))
        .map(|(_, choice)| choice)
}

/// Best root split for a labeled set (exposed for audits and tests).
pub fn root_split(rows: &[&[f64]], labels: &[bool], min_leaf: usize) -> Option<SplitChoice> {
    let n_features = rows.first().map_or(0, |r| r.len());
    let idx: Vec<usize> = (0..rows.len()).collect();
    best_split(rows, labels, &idx, min_leaf.max(1), n_features)
}

/// Grows the node list for `rows`/`labels`.
pub fn fit_nodes(
    rows: &[&[f64]],
    labels: &[bool],
    params: &TreeParams,
) -> Result<Vec<TreeNode>, LearnError> {
    if rows.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if rows.len() != labels.len() {
        return Err(LearnError::InvalidParameter(
            "rows and labels differ in length".into(),
        ));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(LearnError::InvalidParameter("ragged feature rows".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        log::warn!(
            "single-class training set ({} examples, {} positive): fitting a single leaf",
            labels.len(),
            pos
        );
    }
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..rows.len()).collect();
    grow(
        rows,
        labels,
        idx,
        0,
        params.max_depth,
        params.min_leaf.max(1),
        n_features,
        &mut nodes,
    );
    Ok(nodes)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    rows: &[&[f64]],
    labels: &[bool],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    n_features: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let n = idx.len();
    let pos = idx.iter().filter(|&&i| labels[i]).count();
    let positive_fraction = pos as f64 / n as f64;
    let me = nodes.len();
    nodes.push(TreeNode::Leaf {
        positive_fraction,
        sample_count: n,
    });
    if depth >= max_depth || pos == 0 || pos == n || n < 2 * min_leaf {
        return me;
    }
    let Some(split) = best_split(rows, labels, &idx, min_leaf, n_features) else {
        return me;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| rows[i][split.feature_index] < split.threshold);
    debug_assert_eq!(left_idx.len(), split.left_count);
    let left = grow(
        rows, labels, left_idx, depth + 1, max_depth, min_leaf, n_features, nodes,
    );
    let right = grow(
        rows, labels, right_idx, depth + 1, max_depth, min_leaf, n_features, nodes,
    );
    nodes[me] = TreeNode::Split {
        feature_index: split.feature_index,
        threshold: split.threshold,
        left,
        right,
        positive_fraction,
        sample_count: n,
    };
    me
}
