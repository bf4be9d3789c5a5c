//! Runs the command-line workflow from library code: simulate, train,
//! predict and evaluate, all inside one output directory.
//!
//! ```text
//! cargo run --release --example csv_pipeline -- [out_dir]
//! ```

use cpforest::cli::{cmd_evaluate, cmd_predict, cmd_simulate, cmd_train, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    if let Some(dir) = std::env::args().nth(1) {
        cfg.output.dir = dir.into();
    }
    let sim = cmd_simulate(&cfg)?;
    println!(
        "simulated {} and {}",
        sim.train_path.display(),
        sim.eval_path.display()
    );

    let trained = cmd_train(&cfg, &sim.train_path)?;
    println!("trained {}", trained.policy_path.display());

    let pred = cfg.output.dir.join("predictions.csv");
    let rows = cmd_predict(&trained.policy_path, &sim.eval_path, &pred, None)?;
    println!("wrote {rows} predictions to {}", pred.display());

    let plugin = trained.plugin.as_ref().map(|(p, _)| p.as_path());
    let report = cmd_evaluate(&cfg, &trained.policy_path, plugin, &sim.eval_path)?;
    println!("\n{report}");
    Ok(())
}
