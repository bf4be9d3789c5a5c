//! Off-policy evaluation with inverse propensity weights. With known
//! propensities the IPW welfare gain of a policy is unbiased for its true
//! gain; this repeats the comparison over several fresh draws.
//!
//! ```text
//! cargo run --release --example ipw_welfare
//! ```

use cpforest::policy_eval::{ipw_gain_discrepancy, ipw_welfare, ipw_welfare_gain, policy_value};
use cpforest::synth::{generate, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = DgpConfig::default();
    println!(
        "{:>5} {:>9} {:>9} {:>9} {:>7}",
        "seed", "true", "ipw", "diff", "z"
    );
    for seed in 1..=8 {
        let sd = generate(&base.with_seed(seed))?;
        // treat when x0 > 0, a simple rule that is right most of the time
        let assign: Vec<u8> = (0..sd.n())
            .map(|i| u8::from(sd.base.x(i, 0) > 0.0))
            .collect();
        let truth = policy_value(&assign, &sd.tau0)?;
        let gain = ipw_welfare_gain(&assign, &sd.base, &sd.propensity)?;
        let gap = ipw_gain_discrepancy(&assign, &sd)?;
        println!(
            "{seed:>5} {truth:>9.4} {:>9.4} {:>9.4} {:>7.2}",
            gain.value,
            gap.value,
            gap.value / gap.std_error
        );
    }
    let sd = generate(&base)?;
    let all: Vec<u8> = vec![1; sd.n()];
    let none: Vec<u8> = vec![0; sd.n()];
    println!(
        "\nIPW welfare, treat all {:.4}, treat none {:.4}",
        ipw_welfare(&all, &sd.base, &sd.propensity)?,
        ipw_welfare(&none, &sd.base, &sd.propensity)?
    );
    Ok(())
}
