//! Set-level XOR: two signals in one subset versus one subset per signal.
//!
//! `cargo run --release --example set_xor`

use superman::cli::{xor_configuration_name, xor_trial, XorTask};

fn main() -> superman::Result<()> {
    for paired in [true, false] {
        let mut solved = 0;
        let mut best: f64 = 0.0;
        for seed in 0..10 {
            let t = xor_trial(XorTask::Set, paired, seed, 2000)?;
            solved += usize::from(t.solved_at.is_some());
            best = best.max(t.best_accuracy);
        }
        println!("{:>9}: solved {solved}/10, best accuracy {best:.2}", xor_configuration_name(XorTask::Set, paired));
    }
    Ok(())
}
