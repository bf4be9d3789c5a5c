//! Comparison policies: the oracle first-best rule and a plug-in causal forest.

use crate::data::Dataset;
use crate::forest::{Forest, ForestParams, ForestTrainer, Method, TrainError};
use crate::synth::{true_first_best, SyntheticDataset};

/// Treats exactly the units whose true effect is non-negative.
pub fn oracle_policy(sd: &SyntheticDataset) -> Vec<u8> {
    true_first_best(&sd.tau0)
}

/// Trains a plug-in causal forest: same subsampling, honesty and leaf-size
/// rules as the causal-policy forest, but splits maximize the size-weighted
/// squared child effects and the policy thresholds the forest-averaged `τ̂`.
pub fn train_plugin_forest(ds: &Dataset, params: &ForestParams) -> Result<Forest, TrainError> {
    ForestTrainer::new(*params).method(Method::Plugin).fit(ds)
}
