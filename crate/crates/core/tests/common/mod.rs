#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use superman::diffcore::Activation;
use superman::extgnan::{Architecture, DeltaMode};
use superman::signal_graphs::{FeatureGrouping, GraphSet, SignalGraph, SubsetPartition};
use superman::superman::{Ablation, ModelConfig, SupermanModel};

/// A path graph with sorted random timestamps and `d` features per node.
pub fn random_graph(rng: &mut ChaCha8Rng, signal: &str, d: usize, max_nodes: usize) -> SignalGraph {
    let n = rng.random_range(1..=max_nodes);
    let mut ts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
    ts.sort_by(f64::total_cmp);
    let feats = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let directed = rng.random_bool(0.8);
    SignalGraph::from_parts(signal, ts, feats, (1..n).map(|i| (i - 1, i)).collect(), directed).unwrap()
}

/// Random partition of `signals` into up to three subsets.
pub fn random_partition(rng: &mut ChaCha8Rng, signals: &[String]) -> SubsetPartition {
    let k = rng.random_range(1..=signals.len().min(3));
    let mut subsets: Vec<Vec<String>> = vec![Vec::new(); k];
    for (i, s) in signals.iter().enumerate() {
        let slot = if i < k { i } else { rng.random_range(0..k) };
        subsets[slot].push(s.clone());
    }
    SubsetPartition::new(subsets).unwrap()
}

pub struct RandomCase {
    pub model: SupermanModel,
    pub sample: GraphSet,
}

/// A small random model over 1..=4 signals and a sample holding every signal.
pub fn random_case(rng: &mut ChaCha8Rng, seed: u64, ablations: &[Ablation], activations: &[Activation]) -> RandomCase {
    let n_signals = rng.random_range(1..=4);
    let signals: Vec<String> = (0..n_signals).map(|i| format!("s{i}")).collect();
    let partition = random_partition(rng, &signals);
    let ablation = ablations[rng.random_range(0..ablations.len())];
    let mut groupings = BTreeMap::new();
    for subset in partition.subsets() {
        let d = rng.random_range(1..=3);
        let g = if d > 1 && rng.random_bool(0.5) {
            FeatureGrouping::new(vec![vec![0], (1..d).collect()]).unwrap()
        } else {
            FeatureGrouping::joint(d)
        };
        for s in subset {
            groupings.insert(s.clone(), g.clone());
        }
    }
    let config = ModelConfig {
        arch: Architecture {
            hidden: rng.random_range(2..=5),
            layers: rng.random_range(1..=3),
            activation: activations[rng.random_range(0..activations.len())],
            dropout: 0.0,
        },
        delta_mode: if rng.random_bool(0.5) { DeltaMode::Masked } else { DeltaMode::Literal },
        ablation,
        time_scale: rng.random_range(0.5..3.0),
        ..ModelConfig::default()
    };
    let model = SupermanModel::build(partition, &groupings, &config, seed).unwrap();
    let graphs = signals.iter().map(|s| random_graph(rng, s, groupings[s].width(), 5)).collect();
    let sample = GraphSet::new(&format!("case-{seed}"), rng.random_range(0..=1), graphs);
    RandomCase { model, sample }
}

/// Visits every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            visit(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
