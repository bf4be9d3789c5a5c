//! Trains the causal-policy forest and the plug-in causal forest on the
//! synthetic design and prints a policy value / regret table evaluated on a
//! fresh held-out draw.
//!
//! ```text
//! cargo run --release --example compare_methods
//! ```

use std::time::Instant;

use cpforest::baselines::train_plugin_forest;
use cpforest::policy_eval::EvalReport;
use cpforest::synth::{generate, DgpConfig};
use cpforest::{Forest, ForestParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dgp = DgpConfig::default();
    let train = generate(&dgp)?;
    let eval = generate(&dgp.with_seed(dgp.seed + 1).with_n(100_000))?;
    let params = ForestParams::default();

    let start = Instant::now();
    let policy = Forest::train(&train.base, &params)?;
    println!(
        "causal-policy forest trained in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    let start = Instant::now();
    let plugin = train_plugin_forest(&train.base, &params)?;
    println!(
        "plug-in causal forest trained in {:.1}s",
        start.elapsed().as_secs_f64()
    );

    let xs = eval.base.covariates();
    let policy_assign = policy.predict_policies(xs)?;
    let plugin_assign = plugin.predict_policies(xs)?;
    let report = EvalReport::build(
        &eval,
        &[
            ("Plug-in causal forest", &plugin_assign),
            ("Causal-policy forest", &policy_assign),
        ],
    )?;
    println!("\n{report}");
    Ok(())
}
