//! Trains on the synthetic irregular-signal task and reports test metrics.
//!
//! `cargo run --release --example train_irregular`

use superman::cli::{prepare_data, train_seed, DatasetSource, RunConfig};
use superman::synth::{IrregularParams, SynthKind, SynthSpec};
use superman::training::TrainConfig;

fn main() -> superman::Result<()> {
    let params = IrregularParams { n_samples: 1000, seed: 7, ..IrregularParams::default() };
    println!("ground truth: {}", params.rule().description());
    println!("bayes accuracy ~ {:.3}", params.rule().bayes_accuracy(20_000, 1));

    let mut config =
        RunConfig::new(DatasetSource::Synthetic(SynthSpec { kind: SynthKind::IrregularSignal, irregular: params }));
    config.train = TrainConfig { epochs: 10, hidden: 16, dropout: 0.0, lr_max: 3e-3, ..TrainConfig::default() };
    config.model.time_scale = 5.0;

    let data = prepare_data(&config)?;
    println!("splits: {} train / {} val / {} test", data.train.len(), data.val.len(), data.test.len());
    let run = train_seed(&data, &config, 0)?;
    for e in run.history.epochs.iter() {
        println!("epoch {:>2}  train {:.4}  val {:.4}  auprc {:.3}", e.epoch, e.train_loss, e.val_loss, e.val_auprc);
    }
    println!("kept parameters from epoch {}", run.history.best_epoch);
    let m = run.test;
    println!("test: auprc {:.3} auroc {:.3} accuracy {:.3} ece {:.3}", m.auprc, m.auroc, m.accuracy, m.ece);
    Ok(())
}
