//! Ensembles of honest trees.
//!
//! Tree `b` draws everything from its own `ChaCha8Rng` stream: the generator
//! is seeded with `seed_from_u64(params.seed)` and switched to stream `b`.
//! Trees can therefore be grown in any order, on any number of threads, with
//! identical results.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::tree::{
    self, ArmStats, PluginCriterion, PolicyCriterion, SplitCriterion, Tree, TreeError, TreeParams,
    TreeShape,
};

/// Subsample redraws allowed per tree before training fails.
pub const MAX_REDRAWS: usize = 100;

pub const MODEL_FORMAT: &str = "causal-policy-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid forest parameters: {0}")]
    Params(String),
    #[error("dataset has {treated} treated and {control} control units, need at least {required} of each")]
    ArmCoverage {
        treated: usize,
        control: usize,
        required: usize,
    },
    #[error("tree {tree}: no subsample with enough units of each arm after {attempts} draws")]
    Redraw { tree: usize, attempts: usize },
    #[error("tree {tree}: {source}")]
    Tree { tree: usize, source: TreeError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("not a {MODEL_FORMAT} model file (format `{0}`)")]
    Format(String),
    #[error("unsupported model version {found}, expected {MODEL_VERSION}")]
    Version { found: u64 },
    #[error("expected {expected} covariates, got {found}")]
    Dimension { expected: usize, found: usize },
}

/// How per-tree outputs are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of the tree signs `g_b(x)`, treat iff it is ≥ 0.
    #[default]
    Vote,
    /// Mean of the tree estimates `τ̂_b(x)`, treat iff it is ≥ 0.
    TauMean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vote" => Ok(Self::Vote),
            "tau_mean" | "tau-mean" => Ok(Self::TauMean),
            other => Err(format!("unknown aggregation `{other}` (vote | tau_mean)")),
        }
    }
}

/// Which split criterion grew the trees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Restricted `{-1, 1}` criterion; the causal-policy forest.
    #[default]
    Policy,
    /// Squared-spread criterion; the plug-in causal forest baseline.
    Plugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Rows drawn without replacement per tree.
    pub subsample: usize,
    pub seed: u64,
    pub aggregate: Aggregation,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            subsample: 2000,
            seed: 7,
            aggregate: Aggregation::Vote,
            tree: TreeParams::default(),
        }
    }
}

impl ForestParams {
    pub fn validate(&self, n: usize, p: usize) -> Result<(), TrainError> {
        if self.n_trees == 0 {
            return Err(TrainError::Params("n_trees must be at least 1".into()));
        }
        if self.subsample < 2 || self.subsample > n {
            return Err(TrainError::Params(format!(
                "subsample must lie in 2..={n}, got {}",
                self.subsample
            )));
        }
        self.tree
            .validate(p)
            .map_err(|e| TrainError::Params(e.to_string()))
    }
}

/// The rows one tree was grown and estimated on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSample {
    /// Sorted ascending.
    pub split: Vec<usize>,
    /// Sorted ascending; `⌈s/2⌉` rows.
    pub est: Vec<usize>,
    /// Subsample draws used, including the accepted one.
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    method: Method,
    params: ForestParams,
    p: usize,
    streams: Vec<u64>,
    trees: Vec<Tree>,
}

/// Configures and runs forest training.
#[derive(Debug, Clone)]
pub struct ForestTrainer<'a> {
    params: ForestParams,
    method: Method,
    criterion: Option<&'a dyn SplitCriterion>,
    threads: Option<usize>,
}

impl<'a> ForestTrainer<'a> {
    pub fn new(params: ForestParams) -> Self {
        Self {
            params,
            method: Method::Policy,
            criterion: None,
            threads: None,
        }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Overrides the split criterion implied by the method.
    pub fn criterion(mut self, criterion: &'a dyn SplitCriterion) -> Self {
        self.criterion = Some(criterion);
        self
    }

    /// Worker threads; `None` or `Some(0)` uses every available core.
    pub fn threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn fit(&self, ds: &Dataset) -> Result<Forest, TrainError> {
        self.fit_traced(ds).map(|(f, _)| f)
    }

    /// Trains and also returns each tree's split/estimation rows.
    pub fn fit_traced(&self, ds: &Dataset) -> Result<(Forest, Vec<TreeSample>), TrainError> {
        let params = &self.params;
        params.validate(ds.n(), ds.p())?;
        let k = params.tree.min_leaf_per_arm;
        let (treated, control) = ds.arm_counts();
        if treated < 2 * k || control < 2 * k {
            return Err(TrainError::ArmCoverage {
                treated,
                control,
                required: 2 * k,
            });
        }
        let criterion: &dyn SplitCriterion = match (self.criterion, self.method) {
            (Some(c), _) => c,
            (None, Method::Policy) => &PolicyCriterion,
            (None, Method::Plugin) => &PluginCriterion,
        };

        let fit_one = |b: usize| fit_tree(ds, params, criterion, b);
        let fitted: Vec<(Tree, TreeSample)> = match self.threads {
            Some(1) => (0..params.n_trees).map(fit_one).collect::<Result<_, _>>()?,
            threads => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads.unwrap_or(0))
                    .build()
                    .map_err(|e| TrainError::ThreadPool(e.to_string()))?;
                pool.install(|| {
                    (0..params.n_trees)
                        .into_par_iter()
                        .map(fit_one)
                        .collect::<Result<_, _>>()
                })?
            }
        };

        let (trees, samples): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
        let forest = Forest {
            method: self.method,
            params: *params,
            p: ds.p(),
            streams: (0..params.n_trees as u64).collect(),
            trees,
        };
        Ok((forest, samples))
    }
}

fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fit_tree(
    ds: &Dataset,
    params: &ForestParams,
    criterion: &dyn SplitCriterion,
    b: usize,
) -> Result<(Tree, TreeSample), TrainError> {
    let mut rng = tree_rng(params.seed, b as u64);
    let s = params.subsample;
    let n_est = s.div_ceil(2);
    let k = params.tree.min_leaf_per_arm;

    for attempt in 1..=MAX_REDRAWS {
        let mut rows = rand::seq::index::sample(&mut rng, ds.n(), s).into_vec();
        rows.shuffle(&mut rng);
        let mut split = rows.split_off(n_est);
        let mut est = rows;
        split.sort_unstable();
        est.sort_unstable();

        let est_ok = ArmStats::from_rows(&est, ds).counts().at_least(k);
        let split_ok = ArmStats::from_rows(&split, ds).counts().at_least(1);
        if !(est_ok && split_ok) {
            continue;
        }
        let tree = tree::grow(&split, &est, ds, &params.tree, criterion, &mut rng)
            .map_err(|source| TrainError::Tree { tree: b, source })?;
        let sample = TreeSample {
            split,
            est,
            attempts: attempt,
        };
        return Ok((tree, sample));
    }
    Err(TrainError::Redraw {
        tree: b,
        attempts: MAX_REDRAWS,
    })
}

/// Per-forest training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestSummary {
    pub trees: usize,
    pub mean_depth: f64,
    pub max_depth: usize,
    pub mean_leaves: f64,
    pub min_leaf_treated: usize,
    pub min_leaf_control: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    method: Method,
    p: usize,
    params: ForestParams,
    streams: Vec<u64>,
    trees: Vec<Tree>,
}

impl Forest {
    /// Trains a causal-policy forest using every available core.
    pub fn train(ds: &Dataset, params: &ForestParams) -> Result<Self, TrainError> {
        ForestTrainer::new(*params).fit(ds)
    }

    /// Assembles a forest from already grown trees.
    pub fn from_trees(
        method: Method,
        params: ForestParams,
        trees: Vec<Tree>,
    ) -> Result<Self, ModelError> {
        let p = trees.first().map(Tree::p).unwrap_or(0);
        let forest = Self {
            method,
            params: ForestParams {
                n_trees: trees.len(),
                ..params
            },
            p,
            streams: (0..trees.len() as u64).collect(),
            trees,
        };
        forest.check()?;
        Ok(forest)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// RNG stream index each tree was grown from.
    pub fn streams(&self) -> &[u64] {
        &self.streams
    }

    /// Effective aggregation rule. Plug-in forests always average `τ̂`.
    pub fn aggregation(&self) -> Aggregation {
        match self.method {
            Method::Policy => self.params.aggregate,
            Method::Plugin => Aggregation::TauMean,
        }
    }

    /// Returns a copy that combines trees with `rule` (ignored by plug-in forests).
    pub fn with_aggregation(mut self, rule: Aggregation) -> Self {
        self.params.aggregate = rule;
        self
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.p {
            return Err(ModelError::Dimension {
                expected: self.p,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `(1/B) Σ_b g_b(x)`, in `[-1, 1]`.
    pub fn predict_vote(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        let votes: i64 = self
            .trees
            .iter()
            .map(|t| i64::from(t.leaf_for(x).sign))
            .sum();
        Ok(votes as f64 / self.trees.len() as f64)
    }

    /// `(1/B) Σ_b τ̂_b(x)`.
    pub fn predict_tau(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        let total: f64 = self.trees.iter().map(|t| t.leaf_for(x).tau_hat).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// The aggregate the policy thresholds: the vote or the mean `τ̂`.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64, ModelError> {
        match self.aggregation() {
            Aggregation::Vote => self.predict_vote(x),
            Aggregation::TauMean => self.predict_tau(x),
        }
    }

    /// Recommended action: 1 (treat) iff the score is ≥ 0.
    pub fn predict_policy(&self, x: &[f64]) -> Result<u8, ModelError> {
        Ok(u8::from(self.predict_score(x)? >= 0.0))
    }

    /// Scores for every row of `xs`, computed in parallel.
    pub fn predict_scores(&self, xs: ArrayView2<f64>) -> Result<Vec<f64>, ModelError> {
        if xs.ncols() != self.p {
            return Err(ModelError::Dimension {
                expected: self.p,
                found: xs.ncols(),
            });
        }
        let rows: Vec<Vec<f64>> = xs.outer_iter().map(|r| r.to_vec()).collect();
        rows.par_iter().map(|x| self.predict_score(x)).collect()
    }

    /// Actions for every row of `xs`.
    pub fn predict_policies(&self, xs: ArrayView2<f64>) -> Result<Vec<u8>, ModelError> {
        Ok(self
            .predict_scores(xs)?
            .into_iter()
            .map(|s| u8::from(s >= 0.0))
            .collect())
    }

    pub fn summary(&self) -> ForestSummary {
        let shapes: Vec<TreeShape> = self.trees.iter().map(Tree::shape).collect();
        let b = shapes.len() as f64;
        ForestSummary {
            trees: shapes.len(),
            mean_depth: shapes.iter().map(|s| s.depth as f64).sum::<f64>() / b,
            max_depth: shapes.iter().map(|s| s.depth).max().unwrap_or(0),
            mean_leaves: shapes.iter().map(|s| s.leaves as f64).sum::<f64>() / b,
            min_leaf_treated: shapes.iter().map(|s| s.min_treated).min().unwrap_or(0),
            min_leaf_control: shapes.iter().map(|s| s.min_control).min().unwrap_or(0),
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.trees.is_empty() {
            return Err(ModelError::Malformed("forest has no trees".into()));
        }
        if self.p == 0 {
            return Err(ModelError::Malformed("p must be at least 1".into()));
        }
        if self.trees.len() != self.params.n_trees || self.streams.len() != self.trees.len() {
            return Err(ModelError::Malformed(
                "tree count does not match parameters".into(),
            ));
        }
        for (b, t) in self.trees.iter().enumerate() {
            if t.p() != self.p {
                return Err(ModelError::Malformed(format!(
                    "tree {b} has p = {}, forest has p = {}",
                    t.p(),
                    self.p
                )));
            }
            t.check()
                .map_err(|e| ModelError::Malformed(format!("tree {b}: {e}")))?;
        }
        Ok(())
    }

    /// Serialized model file contents.
    pub fn to_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            method: self.method,
            p: self.p,
            params: self.params,
            streams: self.streams.clone(),
            trees: self.trees.clone(),
        };
        let mut bytes = serde_json::to_vec(&file).expect("model serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| ModelError::Malformed(e.to_string()))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            Some(other) => return Err(ModelError::Format(other.to_string())),
            None => return Err(ModelError::Malformed("missing `format`".into())),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            Some(found) => return Err(ModelError::Version { found }),
            None => return Err(ModelError::Malformed("missing `version`".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| ModelError::Malformed(e.to_string()))?;
        let forest = Self {
            method: file.method,
            params: file.params,
            p: file.p,
            streams: file.streams,
            trees: file.trees,
        };
        forest.check()?;
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, DgpConfig};

    fn leaf_forest(taus: &[f64]) -> Forest {
        let trees = taus
            .iter()
            .map(|&t| Tree::single_leaf(2, t, 5, 5))
            .collect();
        Forest::from_trees(Method::Policy, ForestParams::default(), trees).unwrap()
    }

    #[test]
    fn vote_arithmetic() {
        let x = [0.0, 0.0];
        assert_eq!(leaf_forest(&[1.0, 0.5, 0.0]).predict_vote(&x).unwrap(), 1.0);
        let tie = leaf_forest(&[1.0, -1.0]);
        assert_eq!(tie.predict_vote(&x).unwrap(), 0.0);
        assert_eq!(tie.predict_policy(&x).unwrap(), 1);
        let f = leaf_forest(&[1.0, 1.0, 1.0, -1.0, -1.0]);
        assert!((f.predict_vote(&x).unwrap() - 0.2).abs() < 1e-15);
        let f = leaf_forest(&[1.0, 1.0, -1.0, -1.0, -1.0]);
        assert!((f.predict_vote(&x).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(f.predict_policy(&x).unwrap(), 0);
        assert!(matches!(
            f.predict_vote(&[0.0]),
            Err(ModelError::Dimension {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn tau_mean_aggregation() {
        let f = leaf_forest(&[3.0, -1.0, -1.0]).with_aggregation(Aggregation::TauMean);
        assert_eq!(f.predict_score(&[0.0, 0.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(f.predict_policy(&[0.0, 0.0]).unwrap(), 1);
        let f = f.with_aggregation(Aggregation::Vote);
        assert_eq!(f.predict_policy(&[0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn params_and_coverage_errors() {
        let sd = generate(&DgpConfig::default().with_n(100)).unwrap();
        let mut params = ForestParams {
            n_trees: 2,
            subsample: 101,
            ..ForestParams::default()
        };
        assert!(matches!(
            Forest::train(&sd.base, &params),
            Err(TrainError::Params(_))
        ));
        params.subsample = 80;
        params.tree.min_leaf_per_arm = 40;
        assert!(matches!(
            Forest::train(&sd.base, &params),
            Err(TrainError::ArmCoverage { required: 80, .. })
        ));
    }

    #[test]
    fn redraw_exhaustion_names_tree() {
        // 4 treated of 40: an est half of 2 rows can never hold k = 2 of each arm.
        let sd = generate(&DgpConfig::default().with_n(40)).unwrap();
        let mut d = vec![0u8; 40];
        d[..4].fill(1);
        let ds = Dataset::new(
            sd.base.covariates().to_owned(),
            d,
            sd.base.outcomes().to_vec(),
        )
        .unwrap();
        let params = ForestParams {
            n_trees: 3,
            subsample: 4,
            tree: TreeParams {
                min_leaf_per_arm: 2,
                mtry: 1,
                max_depth: 2,
            },
            ..ForestParams::default()
        };
        assert!(matches!(
            Forest::train(&ds, &params),
            Err(TrainError::Redraw {
                tree: 0,
                attempts: MAX_REDRAWS
            })
        ));
    }

    #[test]
    fn model_errors() {
        let f = leaf_forest(&[1.0, -2.0]);
        let bytes = f.to_bytes();
        assert_eq!(Forest::from_bytes(&bytes).unwrap(), f);
        assert!(matches!(
            Forest::from_bytes(&bytes[..bytes.len() / 2]),
            Err(ModelError::Malformed(_))
        ));
        let text = String::from_utf8(bytes).unwrap();
        let v2 = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            Forest::from_bytes(v2.as_bytes()),
            Err(ModelError::Version { found: 2 })
        ));
        let other = text.replacen(MODEL_FORMAT, "something-else", 1);
        assert!(matches!(
            Forest::from_bytes(other.as_bytes()),
            Err(ModelError::Format(_))
        ));
        let bad_sign = text.replacen("\"sign\":-1", "\"sign\":1", 1);
        assert!(matches!(
            Forest::from_bytes(bad_sign.as_bytes()),
            Err(ModelError::Malformed(_))
        ));
    }

    #[test]
    fn aggregation_parses() {
        assert_eq!("vote".parse::<Aggregation>().unwrap(), Aggregation::Vote);
        assert_eq!(
            "tau_mean".parse::<Aggregation>().unwrap(),
            Aggregation::TauMean
        );
        assert!("median".parse::<Aggregation>().is_err());
    }
}
