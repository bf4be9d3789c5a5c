//! Draws a synthetic dataset, checks a few of its properties and writes it as
//! CSV with the ground-truth columns.
//!
//! ```text
//! cargo run --release --example simulate_data -- [out.csv]
//! ```

use cpforest::policy_eval::policy_value;
use cpforest::synth::{generate, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic.csv".into());
    let cfg = DgpConfig::default();
    let sd = generate(&cfg)?;

    let (treated, control) = sd.base.arm_counts();
    let beneficial = sd.tau0.iter().filter(|t| **t >= 0.0).count();
    let (e_min, e_max) = sd
        .propensity
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(*e), hi.max(*e))
        });
    println!("n = {}, p = {}, seed = {}", sd.n(), sd.base.p(), cfg.seed);
    println!("treated {treated}, control {control}");
    println!(
        "propensity range [{e_min:.3}, {e_max:.3}] (floor {})",
        cfg.epsilon
    );
    println!("units that benefit from treatment: {beneficial}");
    println!(
        "first-best policy value: {:.4}",
        policy_value(&sd.first_best(), &sd.tau0)?
    );

    sd.write_csv(&out)?;
    println!("wrote {out}");
    Ok(())
}
