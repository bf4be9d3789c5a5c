//! Causal-policy forests: policy learning from observational data by honest
//! random forests whose splits minimize the squared error of a `{-1, 1}`
//! predictor for the conditional average treatment effect.
//!
//! The crate is organized as
//!
//! * [`data`]: datasets and CSV ingestion,
//! * [`synth`]: a confounded synthetic data generator with ground truth,
//! * [`equivalence`]: exhaustive welfare vs. least-squares checks on finite
//!   policy classes,
//! * [`tree`] and [`forest`]: the learner,
//! * [`baselines`]: oracle and plug-in causal forest policies,
//! * [`policy_eval`]: policy value, regret and IPW welfare,
//! * [`cli`]: the commands behind the `cpforest` binary.
//!
//! ```
//! use cpforest::{forest::{Forest, ForestParams}, synth::{generate, DgpConfig}, tree::TreeParams};
//!
//! let sd = generate(&DgpConfig { n: 2000, ..DgpConfig::default() }).unwrap();
//! let params = ForestParams {
//!     n_trees: 10,
//!     subsample: 1000,
//!     tree: TreeParams { min_leaf_per_arm: 20, mtry: 3, max_depth: 4 },
//!     ..ForestParams::default()
//! };
//! let forest = Forest::train(&sd.base, &params).unwrap();
//! let action = forest.predict_policy(sd.base.row(0).as_slice().unwrap()).unwrap();
//! assert!(action <= 1);
//! ```

pub mod baselines;
pub mod cli;
pub mod data;
pub mod equivalence;
pub mod forest;
pub mod policy_eval;
pub mod synth;
pub mod tree;

pub use data::{Dataset, IndexSet};
pub use forest::{Aggregation, Forest, ForestParams, ForestTrainer, Method};
pub use synth::{DgpConfig, SyntheticDataset};
pub use tree::{Tree, TreeParams};
