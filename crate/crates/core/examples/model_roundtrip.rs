//! Saves a trained forest to JSON, loads it back and checks that predictions
//! are unchanged.
//!
//! ```text
//! cargo run --release --example model_roundtrip -- [model.json]
//! ```

use cpforest::synth::{generate, DgpConfig};
use cpforest::{Forest, ForestParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "policy_forest.json".into());
    let sd = generate(&DgpConfig::default().with_n(4000))?;
    let params = ForestParams {
        n_trees: 50,
        subsample: 1000,
        ..ForestParams::default()
    };
    let forest = Forest::train(&sd.base, &params)?;
    forest.save(&path)?;
    let size = std::fs::metadata(&path)?.len();

    let loaded = Forest::load(&path)?;
    let xs = sd.base.covariates();
    let same = forest.predict_scores(xs)? == loaded.predict_scores(xs)?;
    println!(
        "wrote {path} ({size} bytes), {} trees",
        loaded.trees().len()
    );
    println!("predictions identical after reload: {same}");
    println!(
        "bytes identical after re-save: {}",
        loaded.to_bytes() == forest.to_bytes()
    );
    Ok(())
}
