//! Trains a causal-policy forest with explicit parameters and queries it.
//!
//! ```text
//! cargo run --release --example train_policy_forest
//! ```

use std::time::Instant;

use cpforest::synth::{cate, generate, DgpConfig};
use cpforest::tree::TreeParams;
use cpforest::{Aggregation, ForestParams, ForestTrainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sd = generate(&DgpConfig::default())?;
    let params = ForestParams {
        n_trees: 200,
        subsample: 2000,
        seed: 7,
        aggregate: Aggregation::Vote,
        tree: TreeParams {
            min_leaf_per_arm: 25,
            mtry: 3,
            max_depth: 8,
        },
    };
    let start = Instant::now();
    let forest = ForestTrainer::new(params).threads(None).fit(&sd.base)?;
    let s = forest.summary();
    println!(
        "{} trees in {:.2}s, mean depth {:.1}, mean leaves {:.1}",
        s.trees,
        start.elapsed().as_secs_f64(),
        s.mean_depth,
        s.mean_leaves
    );

    println!(
        "\n{:>6} {:>6} {:>8} {:>8} {:>8} {:>6}",
        "x0", "x1", "tau", "vote", "tau_hat", "treat"
    );
    for (x0, x1) in [
        (-1.5, 0.0),
        (-0.5, 1.0),
        (-0.2, 0.0),
        (0.2, 0.0),
        (0.5, -1.0),
        (1.5, 1.0),
    ] {
        let mut x = vec![0.0; sd.base.p()];
        x[0] = x0;
        x[1] = x1;
        println!(
            "{x0:>6.2} {x1:>6.2} {:>8.3} {:>8.3} {:>8.3} {:>6}",
            cate(&x),
            forest.predict_vote(&x)?,
            forest.predict_tau(&x)?,
            forest.predict_policy(&x)?
        );
    }
    Ok(())
}
