//! On a finite policy class the welfare-maximizing policies and the
//! sign-restricted least-squares fits of the effect coincide under
//! `g = 2π − 1`. This example checks one instance by hand and then runs the
//! randomized suite.
//!
//! ```text
//! cargo run --release --example verify_equivalence -- [trials]
//! ```

use cpforest::equivalence::{
    brute_force_restricted_lsq_argmin, brute_force_welfare_argmax, run_suite, Fault,
    FinitePolicyClass,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1000);

    // three cells, six units
    let pc = FinitePolicyClass::new(vec![0, 0, 1, 1, 2, 2], 3)?;
    let y0 = [1.0, 0.0, 2.0, 1.0, 0.5, 0.5];
    let y1 = [2.0, 0.5, 1.0, 0.0, 0.5, 1.5];
    let tau: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
    let welfare = brute_force_welfare_argmax(&pc, &y1, &y0)?;
    let lsq = brute_force_restricted_lsq_argmin(&pc, &tau)?;
    for mask in &welfare {
        println!(
            "welfare argmax {mask:03b} -> signs {:?}",
            pc.mask_to_signs(*mask)
        );
    }
    for g in &lsq {
        println!("least-squares argmin {g:?}");
    }

    let s = run_suite(trials, 0, None);
    println!(
        "\n{} / {} random instances agree ({} with ties)",
        s.passed, s.trials, s.with_ties
    );
    let broken = run_suite(trials.min(100), 0, Some(Fault::SignFlip));
    println!(
        "with a sign-flip fault injected: {} / {} fail",
        broken.failed, broken.trials
    );
    Ok(())
}
