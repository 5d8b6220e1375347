//! Shifts one subset's features along their first principal component and
//! tracks the mean predicted probability.
//!
//! `cargo run --release --example pca_perturbation`

use superman::cli::{prepare_data, train_seed, DatasetSource, RunConfig};
use superman::interpret::pca_perturbation_curve;
use superman::synth::{IrregularParams, SynthKind, SynthSpec};
use superman::training::TrainConfig;

fn main() -> superman::Result<()> {
    let spec = SynthSpec {
        kind: SynthKind::IrregularSignal,
        irregular: IrregularParams { n_samples: 600, seed: 2, ..IrregularParams::default() },
    };
    let mut config = RunConfig::new(DatasetSource::Synthetic(spec));
    config.train = TrainConfig { epochs: 5, hidden: 8, dropout: 0.0, ..TrainConfig::default() };
    let data = prepare_data(&config)?;
    let model = train_seed(&data, &config, 0)?.checkpoint.model;

    let levels: Vec<f64> = (-4..=4).map(|i| f64::from(i) * 0.5).collect();
    for subset in 0..model.partition().len() {
        match pca_perturbation_curve(&model, &data.test, subset, &levels) {
            Ok(curve) => {
                println!("{} (direction {:?})", curve.target, curve.direction);
                for ((eps, m), sd) in curve.noise_levels.iter().zip(&curve.outputs).zip(&curve.stds) {
                    println!("  {eps:+.1}: {m:.4} ± {sd:.4}");
                }
            }
            Err(e) => println!("subset {subset}: {e}"),
        }
    }
    Ok(())
}
