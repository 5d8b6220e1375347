//! Breaks one prediction into subset, graph and node contributions.
//!
//! `cargo run --release --example explain_contributions`

use superman::cli::{prepare_data, train_seed, DatasetSource, RunConfig};
use superman::interpret::{explain, node_contribution};
use superman::synth::{IrregularParams, SynthKind, SynthSpec};
use superman::training::TrainConfig;

fn main() -> superman::Result<()> {
    let spec = SynthSpec {
        kind: SynthKind::IrregularSignal,
        irregular: IrregularParams { n_samples: 600, seed: 11, ..IrregularParams::default() },
    };
    let mut config = RunConfig::new(DatasetSource::Synthetic(spec));
    config.train = TrainConfig { epochs: 5, hidden: 8, dropout: 0.0, ..TrainConfig::default() };
    let data = prepare_data(&config)?;
    let model = train_seed(&data, &config, 0)?.checkpoint.model;

    let sample = &data.test[0];
    let report = explain(&model, sample)?;
    println!(
        "entity {} label {} logit {:+.4} (bias {:+.4})",
        report.entity_id, sample.label, report.logit, report.output_bias
    );
    for s in &report.subsets {
        println!("  subset {:<10} {:+.4}", s.subset, s.contribution);
        for g in &s.graphs {
            for n in &g.nodes {
                println!("    {} node {} at t={:.2}: {:+.4}", g.signal_type, n.index, n.timestamp, n.contribution);
            }
        }
    }
    println!("reconstruction residual {:.2e}", report.reconstruction_residual);

    if let Some(g) = sample.graphs.iter().find(|g| !g.is_empty()) {
        let c = node_contribution(&model, sample, g.signal_type(), 0)?;
        println!("first {} node alone: {c:+.4}", g.signal_type());
    }
    Ok(())
}
