use serde::{Deserialize, Serialize};

use crate::diffcore::bce_logit;
use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidShape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

/// Mean binary cross-entropy computed from logits.
pub fn bce_loss(logits: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(logits, labels)?;
    if logits.is_empty() {
        return Ok(0.0);
    }
    Ok(logits.iter().zip(labels).map(|(&z, &y)| bce_logit(z, f64::from(y))).sum::<f64>() / logits.len() as f64)
}

/// Step-wise area under the precision-recall curve, `sum_k (R_k - R_{k-1}) P_k`
/// over distinct score thresholds.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUPRC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Area under the ROC curve as the normalised Mann-Whitney statistic, with
/// tied scores given their average rank.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Fraction of `score >= threshold` predictions that match the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::MetricUndefined("accuracy of an empty set".into()));
    }
    let hits = scores.iter().zip(labels).filter(|(&s, &y)| u8::from(s >= threshold) == y).count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_center: f64,
    /// Mean predicted probability in the bin.
    pub confidence: f64,
    /// Fraction of positives in the bin.
    pub accuracy: f64,
    pub count: usize,
}

/// Equal-width bins over [0, 1]; probability 1 falls in the last bin.
pub fn reliability_bins(probs: &[f64], labels: &[u8], n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    check_lengths(probs, labels)?;
    if n_bins == 0 {
        return Err(Error::InvalidConfig("need at least one bin".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidConfig(format!("probability {p} outside [0, 1]")));
    }
    let mut sums = vec![(0.0, 0.0, 0usize); n_bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b].0 += p;
        sums[b].1 += f64::from(y);
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(b, (conf, acc, count))| {
            let c = count.max(1) as f64;
            ReliabilityBin {
                bin_center: (b as f64 + 0.5) / n_bins as f64,
                confidence: conf / c,
                accuracy: acc / c,
                count,
            }
        })
        .collect())
}

/// Expected calibration error, `sum_b (|b| / N) |acc_b - conf_b|`.
pub fn ece(probs: &[f64], labels: &[u8], n_bins: usize) -> Result<f64> {
    let bins = reliability_bins(probs, labels, n_bins)?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let n = probs.len() as f64;
    Ok(bins.iter().map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    pub auprc: f64,
    pub auroc: f64,
    pub accuracy: f64,
    pub ece: f64,
    /// Mean BCE, not part of the reported table.
    #[serde(default)]
    pub loss: f64,
}

impl Metrics {
    /// Computes every metric from probabilities and logits of one split.
    pub fn compute(logits: &[f64], labels: &[u8]) -> Result<Self> {
        let probs: Vec<f64> = logits.iter().map(|&z| crate::diffcore::sigmoid(z)).collect();
        Ok(Self {
            auprc: auprc(&probs, labels)?,
            auroc: auroc(&probs, labels)?,
            accuracy: accuracy(&probs, labels, 0.5)?,
            ece: ece(&probs, labels, 10)?,
            loss: bce_loss(logits, labels)?,
        })
    }

    fn fields(&self) -> [f64; 5] {
        [self.auprc, self.auroc, self.accuracy, self.ece, self.loss]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        Self { auprc: f[0], auroc: f[1], accuracy: f[2], ece: f[3], loss: f[4] }
    }
}

/// Per-seed metrics with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Metrics>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl MetricsReport {
    pub fn from_runs(seeds: Vec<u64>, per_seed: Vec<Metrics>) -> Result<Self> {
        if per_seed.is_empty() || seeds.len() != per_seed.len() {
            return Err(Error::InvalidConfig("need one metrics entry per seed".into()));
        }
        let n = per_seed.len() as f64;
        let mut mean = [0.0; 5];
        for m in &per_seed {
            for (a, v) in mean.iter_mut().zip(m.fields()) {
                *a += v / n;
            }
        }
        let mut var = [0.0; 5];
        for m in &per_seed {
            for ((a, v), mu) in var.iter_mut().zip(m.fields()).zip(mean) {
                *a += (v - mu) * (v - mu) / n;
            }
        }
        Ok(Self { seeds, per_seed, mean: Metrics::from_fields(mean), std: Metrics::from_fields(var.map(f64::sqrt)) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_known_values() {
        assert!((bce_loss(&[0.0], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let big = bce_loss(&[50.0], &[1]).unwrap();
        assert!(big.is_finite() && big < 1e-20);
        assert!(bce_loss(&[-800.0], &[1]).unwrap().is_finite());
    }

    #[test]
    fn perfect_and_inverted_rankings() {
        let labels = [0, 0, 1, 1];
        assert_eq!(auprc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auprc(&[0.1, 0.2], &[1, 1]), Err(Error::MetricUndefined(_))));
        assert!(matches!(auroc(&[0.1, 0.2], &[0, 0]), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn ties_are_averaged() {
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert_eq!(auprc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn ece_hand_case() {
        // bins 9, 8, 3, 1 each hold one sample: (0.1 + 0.8 + 0.7 + 0.1) / 4
        let e = ece(&[0.9, 0.8, 0.3, 0.1], &[1, 0, 1, 0], 10).unwrap();
        assert!((e - 0.425).abs() < 1e-12);
        assert_eq!(ece(&[0.0, 1.0], &[0, 1], 10).unwrap(), 0.0);
        assert_eq!(ece(&[0.5; 4], &[0, 1, 0, 1], 10).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_threshold_is_inclusive() {
        assert_eq!(accuracy(&[0.5, 0.49], &[1, 0], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn report_uses_population_std() {
        let m = |a| Metrics { auprc: a, ..Metrics::default() };
        let r = MetricsReport::from_runs(vec![1, 2], vec![m(0.2), m(0.4)]).unwrap();
        assert!((r.mean.auprc - 0.3).abs() < 1e-15);
        assert!((r.std.auprc - 0.1).abs() < 1e-15);
    }
}
