//! Changeover experiment: eight six-item sequences are learned to ceiling,
//! then at the midpoint the second halves are swapped between sequence
//! pairs. Accuracy dips sharply and recovers as the layer relearns the new
//! continuations.
//!
//! Run with: cargo run --example changeover

use seqmem::experiments::{run_e1_arm, ModelParams, E1_PRESENTATIONS, E1_SWAP_AT};

fn main() -> seqmem::Result<()> {
    let result = run_e1_arm(&ModelParams::default(), 1)?;

    println!("smoothed transition accuracy, one row per 100 presentations\n");
    for start in (0..E1_PRESENTATIONS).step_by(100) {
        let point = &result.curve[start + 99];
        let bar = "#".repeat((point.smoothed * 50.0).round() as usize);
        let marker = if start < E1_SWAP_AT && start + 100 >= E1_SWAP_AT {
            "  <- swap"
        } else {
            ""
        };
        println!("{:>5}  {:>5.3}  {bar}{marker}", start + 100, point.smoothed);
    }

    let extras = &result.summary.extras;
    println!();
    for key in ["pre_swap_last100", "post_swap_min10", "post_swap_last100"] {
        println!("{key:>18}: {:.3}", extras[key]);
    }
    Ok(())
}
