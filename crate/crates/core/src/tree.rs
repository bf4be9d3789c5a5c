//! Honest causal-policy trees.
//!
//! A tree is grown on one half of a subsample (the *split* rows) and its
//! leaves are estimated on the other half (the *estimation* rows). Splits are
//! chosen to minimize
//!
//! ```text
//! score(L, R) = −Σ_{C ∈ {L, R}} (n_C / n_node) · |τ̂_split(C)|
//! ```
//!
//! where `τ̂_split(C)` is the treated-minus-control difference in mean
//! outcomes among split rows in child `C`. Because the predictor is restricted
//! to `{-1, 1}`, this is the plug-in restricted squared error up to constants.
//! A candidate is admissible only if both children keep at least one unit of
//! each arm among split rows and at least `k` of each arm among estimation
//! rows. Each leaf stores `τ̂` computed on estimation rows and its sign
//! `g = 1` iff `τ̂ ≥ 0`.
//!
//! Routing sends `x[feature] ≤ threshold` to the left child.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("{sample} sample has {treated} treated and {control} control units, need at least {required} of each")]
    ArmShortfall {
        sample: &'static str,
        treated: usize,
        control: usize,
        required: usize,
    },
    #[error("invalid tree parameters: {0}")]
    Params(String),
    #[error("expected {expected} covariates, got {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// `k`: minimum treated and minimum control estimation rows per leaf.
    pub min_leaf_per_arm: usize,
    /// `m`: candidate split variables drawn at each node.
    pub mtry: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_leaf_per_arm: 25,
            mtry: 3,
            max_depth: 8,
        }
    }
}

impl TreeParams {
    pub fn validate(&self, p: usize) -> Result<(), TreeError> {
        if self.min_leaf_per_arm == 0 {
            return Err(TreeError::Params(
                "min_leaf_per_arm must be at least 1".into(),
            ));
        }
        if self.mtry == 0 || self.mtry > p {
            return Err(TreeError::Params(format!(
                "mtry must lie in 1..={p}, got {}",
                self.mtry
            )));
        }
        if self.max_depth == 0 {
            return Err(TreeError::Params("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-arm counts and outcome sums over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub n_treated: usize,
    pub n_control: usize,
    pub sum_treated: f64,
    pub sum_control: f64,
}

impl ArmStats {
    pub fn from_rows(rows: &[usize], ds: &Dataset) -> Self {
        let mut s = Self::default();
        for &i in rows {
            s.push(ds.treated(i), ds.y(i));
        }
        s
    }

    #[inline]
    pub fn push(&mut self, treated: bool, y: f64) {
        if treated {
            self.n_treated += 1;
            self.sum_treated += y;
        } else {
            self.n_control += 1;
            self.sum_control += y;
        }
    }

    pub fn n(&self) -> usize {
        self.n_treated + self.n_control
    }

    /// Difference in mean outcomes, or `None` if an arm is empty.
    pub fn tau(&self) -> Option<f64> {
        if self.n_treated == 0 || self.n_control == 0 {
            return None;
        }
        Some(self.sum_treated / self.n_treated as f64 - self.sum_control / self.n_control as f64)
    }

    pub fn counts(&self) -> ArmCounts {
        ArmCounts {
            treated: self.n_treated,
            control: self.n_control,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArmCounts {
    pub treated: usize,
    pub control: usize,
}

impl ArmCounts {
    pub fn at_least(&self, k: usize) -> bool {
        self.treated >= k && self.control >= k
    }
}

/// Difference in mean outcomes between treated and control rows.
pub fn leaf_tau(rows: &[usize], ds: &Dataset) -> Result<f64, TreeError> {
    let stats = ArmStats::from_rows(rows, ds);
    stats.tau().ok_or(TreeError::ArmShortfall {
        sample: "leaf",
        treated: stats.n_treated,
        control: stats.n_control,
        required: 1,
    })
}

/// `1` if `tau_hat ≥ 0`, else `-1`.
#[inline]
pub fn leaf_sign(tau_hat: f64) -> i8 {
    if tau_hat >= 0.0 {
        1
    } else {
        -1
    }
}

/// A binary split of a node. Left is `x[feature] ≤ threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub split_left: ArmStats,
    pub split_right: ArmStats,
    pub est_left: ArmCounts,
    pub est_right: ArmCounts,
}

/// Scores a split from split-sample child statistics. Lower is better;
/// `None` marks the candidate inadmissible.
pub trait SplitCriterion: Send + Sync + fmt::Debug {
    fn score(&self, left: &ArmStats, right: &ArmStats) -> Option<f64>;
}

/// The restricted `{-1, 1}` squared-error criterion:
/// `−Σ (n_C / n) · |τ̂(C)|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyCriterion;

impl SplitCriterion for PolicyCriterion {
    fn score(&self, left: &ArmStats, right: &ArmStats) -> Option<f64> {
        let (tl, tr) = (left.tau()?, right.tau()?);
        let n = (left.n() + right.n()) as f64;
        Some(-(left.n() as f64 / n * tl.abs() + right.n() as f64 / n * tr.abs()))
    }
}

/// The unrestricted squared-error criterion used by plug-in causal trees:
/// `−Σ (n_C / n) · τ̂(C)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PluginCriterion;

impl SplitCriterion for PluginCriterion {
    fn score(&self, left: &ArmStats, right: &ArmStats) -> Option<f64> {
        let (tl, tr) = (left.tau()?, right.tau()?);
        let n = (left.n() + right.n()) as f64;
        Some(-(left.n() as f64 / n * tl * tl + right.n() as f64 / n * tr * tr))
    }
}

/// Scores a candidate with [`PolicyCriterion`].
pub fn score_split(c: &SplitCandidate) -> Option<f64> {
    PolicyCriterion.score(&c.split_left, &c.split_right)
}

/// Midpoint between two consecutive distinct values, kept inside `[lo, hi)`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

/// Every threshold between consecutive distinct values of each listed feature
/// over `split_rows`, with child statistics on both samples.
pub fn candidate_splits(
    split_rows: &[usize],
    est_rows: &[usize],
    ds: &Dataset,
    features: &[usize],
) -> Vec<SplitCandidate> {
    let mut out = Vec::new();
    let mut pts: Vec<(f64, bool, f64)> = Vec::with_capacity(split_rows.len());
    let mut est_pts: Vec<(f64, bool)> = Vec::with_capacity(est_rows.len());
    let mut suffix: Vec<ArmStats> = Vec::with_capacity(split_rows.len() + 1);
    let est_total = ArmStats::from_rows(est_rows, ds).counts();

    for &f in features {
        pts.clear();
        pts.extend(
            split_rows
                .iter()
                .map(|&i| (ds.x(i, f), ds.treated(i), ds.y(i))),
        );
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        est_pts.clear();
        est_pts.extend(est_rows.iter().map(|&i| (ds.x(i, f), ds.treated(i))));
        est_pts.sort_by(|a, b| a.0.total_cmp(&b.0));

        // suffix[j] holds stats over pts[j..]
        suffix.clear();
        suffix.resize(pts.len() + 1, ArmStats::default());
        for j in (0..pts.len()).rev() {
            let mut s = suffix[j + 1];
            s.push(pts[j].1, pts[j].2);
            suffix[j] = s;
        }

        let mut left = ArmStats::default();
        let mut est_left = ArmCounts::default();
        let mut e = 0;
        for j in 0..pts.len().saturating_sub(1) {
            left.push(pts[j].1, pts[j].2);
            let (lo, hi) = (pts[j].0, pts[j + 1].0);
            if lo == hi {
                continue;
            }
            let threshold = midpoint(lo, hi);
            while e < est_pts.len() && est_pts[e].0 <= threshold {
                if est_pts[e].1 {
                    est_left.treated += 1;
                } else {
                    est_left.control += 1;
                }
                e += 1;
            }
            out.push(SplitCandidate {
                feature: f,
                threshold,
                split_left: left,
                split_right: suffix[j + 1],
                est_left,
                est_right: ArmCounts {
                    treated: est_total.treated - est_left.treated,
                    control: est_total.control - est_left.control,
                },
            });
        }
    }
    out
}

/// Split scores closer than this to the best score count as tied. Children
/// with the same rows can be summed in different orders for different
/// features, so exact comparison would let rounding pick the winner.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// The admissible candidate with the lowest score. Candidates scoring within
/// [`SCORE_TIE_TOLERANCE`] of the minimum are tied, and the tie goes to the
/// lower feature index and then the lower threshold.
pub fn choose_split(
    candidates: &[SplitCandidate],
    min_leaf_per_arm: usize,
    criterion: &dyn SplitCriterion,
) -> Option<(SplitCandidate, f64)> {
    let scored: Vec<(f64, &SplitCandidate)> = candidates
        .iter()
        .filter(|c| c.est_left.at_least(min_leaf_per_arm) && c.est_right.at_least(min_leaf_per_arm))
        .filter_map(|c| {
            criterion
                .score(&c.split_left, &c.split_right)
                .map(|s| (s, c))
        })
        .collect();
    let best = scored.iter().map(|(s, _)| *s).min_by(f64::total_cmp)?;
    scored
        .into_iter()
        .filter(|(s, _)| *s - best <= SCORE_TIE_TOLERANCE)
        .min_by(|a, b| {
            a.1.feature
                .cmp(&b.1.feature)
                .then(a.1.threshold.total_cmp(&b.1.threshold))
        })
        .map(|(s, c)| (*c, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaf {
    pub tau_hat: f64,
    pub sign: i8,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// A grown tree stored as a node arena; `nodes[0]` is the root and children
/// always come after their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    p: usize,
    nodes: Vec<Node>,
}

/// Grows one honest tree.
///
/// The partition is built from `split_rows` only; leaf statistics are then
/// filled in from `est_rows` by [`Tree::estimate_leaves`].
pub fn grow<R: Rng + ?Sized>(
    split_rows: &[usize],
    est_rows: &[usize],
    ds: &Dataset,
    params: &TreeParams,
    criterion: &dyn SplitCriterion,
    rng: &mut R,
) -> Result<Tree, TreeError> {
    params.validate(ds.p())?;
    let k = params.min_leaf_per_arm;
    let est = ArmStats::from_rows(est_rows, ds).counts();
    if !est.at_least(k) {
        return Err(TreeError::ArmShortfall {
            sample: "estimation",
            treated: est.treated,
            control: est.control,
            required: k,
        });
    }
    let split = ArmStats::from_rows(split_rows, ds).counts();
    if !split.at_least(1) {
        return Err(TreeError::ArmShortfall {
            sample: "split",
            treated: split.treated,
            control: split.control,
            required: 1,
        });
    }

    let mut builder = Builder {
        ds,
        params,
        criterion,
        nodes: Vec::new(),
    };
    builder.build(split_rows.to_vec(), est_rows.to_vec(), 0, rng);
    let mut tree = Tree {
        p: ds.p(),
        nodes: builder.nodes,
    };
    tree.estimate_leaves(est_rows, ds)?;
    Ok(tree)
}

struct Builder<'a> {
    ds: &'a Dataset,
    params: &'a TreeParams,
    criterion: &'a dyn SplitCriterion,
    nodes: Vec<Node>,
}

const PENDING_LEAF: Leaf = Leaf {
    tau_hat: 0.0,
    sign: 1,
    n_treated: 0,
    n_control: 0,
};

impl Builder<'_> {
    fn build<R: Rng + ?Sized>(
        &mut self,
        split: Vec<usize>,
        est: Vec<usize>,
        depth: usize,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(PENDING_LEAF));
        if depth >= self.params.max_depth {
            return id;
        }

        let features = rand::seq::index::sample(rng, self.ds.p(), self.params.mtry).into_vec();
        let candidates = candidate_splits(&split, &est, self.ds, &features);
        let Some((best, _)) =
            choose_split(&candidates, self.params.min_leaf_per_arm, self.criterion)
        else {
            return id;
        };

        let ds = self.ds;
        let goes_left = |i: &usize| ds.x(*i, best.feature) <= best.threshold;
        let (split_l, split_r): (Vec<usize>, Vec<usize>) = split.into_iter().partition(goes_left);
        let (est_l, est_r): (Vec<usize>, Vec<usize>) = est.into_iter().partition(goes_left);
        let left = self.build(split_l, est_l, depth + 1, rng);
        let right = self.build(split_r, est_r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

/// Shape statistics of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub depth: usize,
    pub leaves: usize,
    pub min_treated: usize,
    pub min_control: usize,
}

impl Tree {
    /// A one-leaf tree; mostly useful for tests and examples.
    pub fn single_leaf(p: usize, tau_hat: f64, n_treated: usize, n_control: usize) -> Self {
        Self {
            p,
            nodes: vec![Node::Leaf(Leaf {
                tau_hat,
                sign: leaf_sign(tau_hat),
                n_treated,
                n_control,
            })],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Leaf)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf(l) => Some((i, l)),
            Node::Split { .. } => None,
        })
    }

    /// Index of the leaf that `x` falls into. Does not check the dimension.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf(_) => return id,
            }
        }
    }

    #[inline]
    pub(crate) fn leaf_for(&self, x: &[f64]) -> &Leaf {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    /// `(τ̂, g)` of the leaf containing `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, i8), TreeError> {
        if x.len() != self.p {
            return Err(TreeError::Dimension {
                expected: self.p,
                found: x.len(),
            });
        }
        let leaf = self.leaf_for(x);
        Ok((leaf.tau_hat, leaf.sign))
    }

    /// Groups `rows` by the leaf they fall into, keyed by node index. Row
    /// order within each group follows `rows`.
    pub fn route(&self, rows: &[usize], ds: &Dataset) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in rows {
            let x = ds.row(i);
            let leaf = self.leaf_index(x.as_slice().expect("standard layout rows"));
            groups.entry(leaf).or_default().push(i);
        }
        groups
    }

    /// Recomputes every leaf's `τ̂`, sign and arm counts from `est_rows`,
    /// keeping the partition fixed.
    pub fn estimate_leaves(&mut self, est_rows: &[usize], ds: &Dataset) -> Result<(), TreeError> {
        let groups = self.route(est_rows, ds);
        for id in 0..self.nodes.len() {
            if let Node::Leaf(_) = self.nodes[id] {
                let rows = groups.get(&id).map(Vec::as_slice).unwrap_or(&[]);
                let stats = ArmStats::from_rows(rows, ds);
                let tau_hat = stats.tau().ok_or(TreeError::ArmShortfall {
                    sample: "leaf estimation",
                    treated: stats.n_treated,
                    control: stats.n_control,
                    required: 1,
                })?;
                self.nodes[id] = Node::Leaf(Leaf {
                    tau_hat,
                    sign: leaf_sign(tau_hat),
                    n_treated: stats.n_treated,
                    n_control: stats.n_control,
                });
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> TreeShape {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut shape = TreeShape {
            depth: 0,
            leaves: 0,
            min_treated: usize::MAX,
            min_control: usize::MAX,
        };
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split { left, right, .. } => {
                    depth[*left] = depth[id] + 1;
                    depth[*right] = depth[id] + 1;
                }
                Node::Leaf(l) => {
                    shape.leaves += 1;
                    shape.depth = shape.depth.max(depth[id]);
                    shape.min_treated = shape.min_treated.min(l.n_treated);
                    shape.min_control = shape.min_control.min(l.n_control);
                }
            }
        }
        shape
    }

    /// Structural checks for trees read from disk.
    pub(crate) fn check(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.p {
                        return Err(format!("node {id}: feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {id}: non-finite threshold"));
                    }
                    for &c in [left, right] {
                        if c <= id || c >= self.nodes.len() {
                            return Err(format!("node {id}: bad child index {c}"));
                        }
                        parents[c] += 1;
                    }
                }
                Node::Leaf(l) => {
                    if !l.tau_hat.is_finite() || l.sign != leaf_sign(l.tau_hat) {
                        return Err(format!("node {id}: inconsistent leaf"));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&c| c != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }
}
