//! Grows a single honest tree and prints its structure. Splits are chosen on
//! one half of the sample; the leaf effects come from the other half.
//!
//! ```text
//! cargo run --release --example honest_tree
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cpforest::synth::{generate, DgpConfig};
use cpforest::tree::{grow, Node, PolicyCriterion, Tree, TreeParams};

fn print_node(tree: &Tree, id: usize, indent: usize) {
    let pad = "  ".repeat(indent);
    match &tree.nodes()[id] {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            println!("{pad}x{feature} <= {threshold:.3}");
            print_node(tree, *left, indent + 1);
            println!("{pad}x{feature} >  {threshold:.3}");
            print_node(tree, *right, indent + 1);
        }
        Node::Leaf(leaf) => println!(
            "{pad}-> tau_hat {:+.3}  action {}  (treated {}, control {})",
            leaf.tau_hat,
            if leaf.sign > 0 { "treat" } else { "control" },
            leaf.n_treated,
            leaf.n_control
        ),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sd = generate(&DgpConfig::default().with_n(4000))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows: Vec<usize> = (0..sd.n()).collect();
    rows.shuffle(&mut rng);
    let split = rows.split_off(sd.n() / 2);
    let est = rows;

    let params = TreeParams {
        min_leaf_per_arm: 50,
        mtry: 3,
        max_depth: 3,
    };
    let tree = grow(&split, &est, &sd.base, &params, &PolicyCriterion, &mut rng)?;
    print_node(&tree, 0, 0);
    let shape = tree.shape();
    println!("\ndepth {}, {} leaves", shape.depth, shape.leaves);
    Ok(())
}
