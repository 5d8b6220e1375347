//! Feature-level XOR: two features of one signal, encoded jointly or apart.
//!
//! `cargo run --release --example feature_xor`

use superman::cli::{xor_trial, XorTask};
use superman::synth::additive_realizable;

fn main() -> superman::Result<()> {
    println!("additive model can express XOR: {}", additive_realizable([0, 1, 1, 0]));
    println!("additive model can express AND: {}", additive_realizable([0, 0, 0, 1]));
    for grouped in [true, false] {
        let mut solved = 0;
        let mut best: f64 = 0.0;
        for seed in 0..10 {
            let t = xor_trial(XorTask::Feature, grouped, seed, 2000)?;
            solved += usize::from(t.solved_at.is_some());
            best = best.max(t.best_accuracy);
        }
        let name = if grouped { "grouped" } else { "singleton" };
        println!("{name:>9}: solved {solved}/10, best accuracy {best:.2}");
    }
    Ok(())
}
