//! Relative AUROC/AUPRC change when test inputs are perturbed.
//!
//! `cargo run --release --example noise_robustness`

use superman::cli::{prepare_data, train_seed, DatasetSource, RunConfig};
use superman::interpret::{noise_robustness, NoiseKind, NoiseSpec};
use superman::signal_graphs::NormConfig;
use superman::synth::{IrregularParams, SynthKind, SynthSpec};
use superman::training::TrainConfig;

fn main() -> superman::Result<()> {
    let spec = SynthSpec {
        kind: SynthKind::IrregularSignal,
        irregular: IrregularParams { n_samples: 800, seed: 5, ..IrregularParams::default() },
    };
    let mut config = RunConfig::new(DatasetSource::Synthetic(spec));
    config.train = TrainConfig { epochs: 6, hidden: 8, dropout: 0.0, ..TrainConfig::default() };
    // Keep the raw test split so noise is injected before normalization.
    config.normalize = NormConfig { features: false, timestamps: false };
    let data = prepare_data(&config)?;
    let model = train_seed(&data, &config, 0)?.checkpoint.model;

    for kind in [NoiseKind::Additive, NoiseKind::Multiplicative, NoiseKind::Temporal] {
        let spec = NoiseSpec { kind, levels: vec![0.0, 0.1, 0.25, 0.5] };
        let table = noise_robustness(&model, &data.test, &spec, &[0, 1, 2], None)?;
        println!("{kind:?}");
        for r in &table.rows {
            println!(
                "  sigma {:.2}: auroc {:+.2}% (±{:.2})  auprc {:+.2}% (±{:.2})",
                r.sigma, r.delta_auroc_pct, r.delta_auroc_std, r.delta_auprc_pct, r.delta_auprc_std
            );
        }
    }
    Ok(())
}
