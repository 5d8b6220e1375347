use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::GraphSet;
use crate::error::Result;

const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub features: bool,
    pub timestamps: bool,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { features: true, timestamps: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<(f64, f64)>,
}

/// Per-signal z-score statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NormStats {
    pub signals: BTreeMap<String, SignalStats>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl NormStats {
    pub fn fit(train: &[GraphSet], config: NormConfig) -> Self {
        let mut pooled: BTreeMap<&str, (Vec<&Vec<f64>>, Vec<f64>)> = BTreeMap::new();
        for g in train.iter().flat_map(|s| &s.graphs) {
            let slot = pooled.entry(g.signal_type()).or_default();
            slot.0.extend(g.features());
            slot.1.extend_from_slice(g.timestamps());
        }
        let mut signals = BTreeMap::new();
        for (name, (rows, times)) in pooled {
            let Some(d) = rows.first().map(|r| r.len()) else { continue };
            let (mut mean, mut std) = (vec![0.0; d], vec![1.0; d]);
            if config.features {
                for c in 0..d {
                    let (m, s) = mean_std(rows.iter().map(|r| r[c]));
                    mean[c] = m;
                    std[c] = s;
                }
            }
            let time = config.timestamps.then(|| mean_std(times.iter().copied()));
            signals.insert(name.to_string(), SignalStats { mean, std, time });
        }
        Self { signals }
    }

    /// Applies the stored statistics in place. Signals never seen during
    /// fitting pass through unchanged.
    pub fn apply(&self, dataset: &mut [GraphSet]) -> Result<()> {
        for g in dataset.iter_mut().flat_map(|s| s.graphs.iter_mut()) {
            let Some(st) = self.signals.get(g.signal_type()) else { continue };
            for row in g.features_mut() {
                for (c, v) in row.iter_mut().enumerate() {
                    let (m, s) = (st.mean[c], st.std[c]);
                    *v = if s < MIN_STD { *v - m } else { (*v - m) / s };
                }
            }
            if let Some((m, s)) = st.time {
                let ts = g.timestamps().iter().map(|t| if s < MIN_STD { t - m } else { (t - m) / s }).collect();
                g.set_timestamps(ts)?;
            }
        }
        Ok(())
    }
}

pub fn normalize_features(dataset: &mut [GraphSet], stats: &NormStats) -> Result<()> {
    stats.apply(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_graphs::SignalGraph;

    fn sample(id: &str, values: &[f64]) -> GraphSet {
        let n = values.len();
        let g = SignalGraph::from_parts(
            "crp",
            (0..n).map(|i| i as f64).collect(),
            values.iter().map(|&v| vec![v, 5.0]).collect(),
            (0..n - 1).map(|i| (i, i + 1)).collect(),
            true,
        )
        .unwrap();
        GraphSet::new(id, 0, vec![g])
    }

    #[test]
    fn z_scores_with_train_statistics() {
        let train = vec![sample("a", &[8.0, 12.0]), sample("b", &[8.0, 12.0])];
        let stats = NormStats::fit(&train, NormConfig::default());
        assert_eq!(stats.signals["crp"].mean[0], 10.0);
        assert_eq!(stats.signals["crp"].std[0], 2.0);
        let mut val = vec![sample("v", &[14.0, 100.0])];
        stats.apply(&mut val).unwrap();
        let f = val[0].graphs[0].features();
        assert_eq!(f[0][0], 2.0);
        assert_eq!(f[1][0], 45.0);
        // constant feature: centred only
        assert_eq!(f[0][1], 0.0);
    }

    #[test]
    fn timestamps_untouched_by_default() {
        let train = vec![sample("a", &[1.0, 2.0, 3.0])];
        let stats = NormStats::fit(&train, NormConfig::default());
        let mut d = train.clone();
        stats.apply(&mut d).unwrap();
        assert_eq!(d[0].graphs[0].timestamps(), train[0].graphs[0].timestamps());
        let with_time = NormStats::fit(&train, NormConfig { features: false, timestamps: true });
        let mut d2 = train.clone();
        with_time.apply(&mut d2).unwrap();
        assert_eq!(d2[0].graphs[0].features(), train[0].graphs[0].features());
        assert!(d2[0].graphs[0].timestamps()[0] < 0.0);
    }
}
