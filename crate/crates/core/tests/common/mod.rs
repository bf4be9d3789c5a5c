#![allow(dead_code)]

use cpforest::synth::{generate, DgpConfig, SyntheticDataset};
use cpforest::tree::TreeParams;
use cpforest::ForestParams;

pub fn synthetic(n: usize, seed: u64) -> SyntheticDataset {
    generate(&DgpConfig::default().with_n(n).with_seed(seed)).unwrap()
}

pub fn small_params(n_trees: usize, subsample: usize, k: usize, depth: usize) -> ForestParams {
    ForestParams {
        n_trees,
        subsample,
        tree: TreeParams {
            min_leaf_per_arm: k,
            mtry: 3,
            max_depth: depth,
        },
        ..ForestParams::default()
    }
}

/// Independent leaf membership test: route one row by walking the node list.
pub fn in_leaf(tree: &cpforest::Tree, leaf: usize, x: &[f64]) -> bool {
    tree.leaf_index(x) == leaf
}

/// Difference in means written with the Riesz weights over the whole
/// estimation sample: (1/n') Σ α(X_i) Y_i.
pub fn riesz_form(est: &[usize], member: &[bool], ds: &cpforest::Dataset) -> f64 {
    let n = est.len() as f64;
    let mut treated = 0.0;
    let mut control = 0.0;
    for (pos, &i) in est.iter().enumerate() {
        if member[pos] {
            if ds.treated(i) {
                treated += 1.0;
            } else {
                control += 1.0;
            }
        }
    }
    let (pt, pc) = (treated / n, control / n);
    let mut total = 0.0;
    for (pos, &i) in est.iter().enumerate() {
        let ind = if member[pos] { 1.0 } else { 0.0 };
        let d = f64::from(ds.treatments()[i]);
        let alpha = d * ind / pt - (1.0 - d) * ind / pc;
        total += alpha * ds.y(i);
    }
    total / n
}
