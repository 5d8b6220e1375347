//! Synthetic datasets: the two XOR truth tables and an irregularly sampled
//! multi-signal task whose label depends on measurement gaps.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::sigmoid;
use crate::error::{Error, Result};
use crate::signal_graphs::{dataset_to_json, FeatureGrouping, GraphSet, SignalGraph, SubsetPartition};

pub const XOR_PATTERNS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

fn single_node(signal: &str, features: Vec<f64>) -> SignalGraph {
    SignalGraph::from_parts(signal, vec![0.0], vec![features], vec![], true).expect("one-node graph")
}

/// The four XOR patterns as one-node, two-feature graphs of signal `x`,
/// repeated `n_samples` times.
pub fn feature_xor_dataset(n_samples: usize) -> Vec<GraphSet> {
    let mut out = Vec::with_capacity(4 * n_samples);
    for r in 0..n_samples {
        for (a, b) in XOR_PATTERNS {
            let g = single_node("x", vec![f64::from(a), f64::from(b)]);
            out.push(GraphSet::new(&format!("fx-{r}-{a}{b}"), a ^ b, vec![g]));
        }
    }
    out
}

/// `{{0, 1}}` when grouped, `{{0}, {1}}` otherwise.
pub fn feature_xor_groupings(grouped: bool) -> BTreeMap<String, FeatureGrouping> {
    let g = if grouped { FeatureGrouping::joint(2) } else { FeatureGrouping::singletons(2) };
    BTreeMap::from([("x".to_string(), g)])
}

pub fn feature_xor_partition() -> SubsetPartition {
    SubsetPartition::from_slices(&[&["x"]]).expect("valid partition")
}

/// Two one-node graphs `A` and `B` carrying one binary feature each.
pub fn set_xor_dataset(n_samples: usize) -> Vec<GraphSet> {
    let mut out = Vec::with_capacity(4 * n_samples);
    for r in 0..n_samples {
        for (a, b) in XOR_PATTERNS {
            let graphs = vec![single_node("A", vec![f64::from(a)]), single_node("B", vec![f64::from(b)])];
            out.push(GraphSet::new(&format!("sx-{r}-{a}{b}"), a ^ b, graphs));
        }
    }
    out
}

/// `{A, B}` together when paired, `{A}, {B}` otherwise.
pub fn set_xor_partition(paired: bool) -> SubsetPartition {
    if paired { SubsetPartition::from_slices(&[&["A", "B"]]) } else { SubsetPartition::from_slices(&[&["A"], &["B"]]) }
        .expect("valid partition")
}

pub fn set_xor_groupings() -> BTreeMap<String, FeatureGrouping> {
    BTreeMap::from([("A".to_string(), FeatureGrouping::joint(1)), ("B".to_string(), FeatureGrouping::joint(1))])
}

/// Knobs of the irregular multi-signal task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrregularParams {
    pub n_samples: usize,
    pub seed: u64,
    /// Weight of the per-entity value level in the label logit.
    pub value_effect: f64,
    /// Weight of the per-entity log gap scale in the label logit.
    pub gap_effect: f64,
    pub sharpness: f64,
    /// Std of measurement noise around the value level.
    pub value_noise: f64,
    /// Node count range of the value and distractor signals.
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Every gap-signal graph has exactly this many nodes.
    pub gap_nodes: usize,
    /// Mean spacing of Poisson-spaced signals and base scale of gaps.
    pub mean_gap: f64,
    /// Up to this many distractor signals; each entity carries at least one.
    pub max_distractors: usize,
}

impl Default for IrregularParams {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            value_effect: 1.0,
            gap_effect: 1.0,
            sharpness: 3.0,
            value_noise: 0.3,
            min_nodes: 3,
            max_nodes: 6,
            gap_nodes: 6,
            mean_gap: 1.0,
            max_distractors: 2,
        }
    }
}

impl IrregularParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes || self.gap_nodes < 2 {
            return Err(Error::InvalidConfig("node counts must satisfy 1 <= min <= max and gap_nodes >= 2".into()));
        }
        if !(self.mean_gap > 0.0 && self.value_noise >= 0.0 && self.sharpness > 0.0) {
            return Err(Error::InvalidConfig("mean_gap and sharpness must be positive".into()));
        }
        if !(1..=4).contains(&self.max_distractors) {
            return Err(Error::InvalidConfig("max_distractors must lie in 1..=4".into()));
        }
        Ok(())
    }

    pub fn signals(&self) -> Vec<String> {
        let mut s = vec!["value".to_string(), "gap".to_string()];
        s.extend((0..self.max_distractors).map(|k| format!("noise{k}")));
        s
    }

    /// Every signal in its own subset.
    pub fn partition(&self) -> SubsetPartition {
        SubsetPartition::singletons(&self.signals()).expect("distinct signal names")
    }

    pub fn groupings(&self) -> BTreeMap<String, FeatureGrouping> {
        self.signals().into_iter().map(|s| (s, FeatureGrouping::joint(1))).collect()
    }

    pub fn rule(&self) -> GroundTruthRule {
        GroundTruthRule { value_effect: self.value_effect, gap_effect: self.gap_effect, sharpness: self.sharpness }
    }
}

/// `P(y = 1) = sigmoid(sharpness * (value_effect * mu + gap_effect * g))`
/// with latent `mu, g ~ N(0, 1)`. The value signal measures `mu` with noise;
/// gap-signal spacings are exponential with mean `mean_gap * exp(g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRule {
    pub value_effect: f64,
    pub gap_effect: f64,
    pub sharpness: f64,
}

impl GroundTruthRule {
    pub fn probability(&self, mu: f64, g: f64) -> f64 {
        sigmoid(self.sharpness * (self.value_effect * mu + self.gap_effect * g))
    }

    /// Monte-Carlo estimate of `E[max(p, 1 - p)]`, the accuracy of an
    /// oracle that sees the latents.
    pub fn bayes_accuracy(&self, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..draws {
            let mu: f64 = StandardNormal.sample(&mut rng);
            let g: f64 = StandardNormal.sample(&mut rng);
            let p = self.probability(mu, g);
            acc += p.max(1.0 - p);
        }
        acc / draws.max(1) as f64
    }

    pub fn description(&self) -> String {
        format!(
            "P(y=1) = sigmoid({} * ({} * mu + {} * g)); value ~ N(mu, noise^2); gap spacing ~ Exp(mean = mean_gap * exp(g))",
            self.sharpness, self.value_effect, self.gap_effect
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub kind: SynthKind,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<GroundTruthRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayes_accuracy: Option<f64>,
    pub positives: usize,
    /// sha256 of the canonical dataset JSON.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub samples: Vec<GraphSet>,
    pub metadata: SynthMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    FeatureXor,
    SetXor,
    IrregularSignal,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature_xor" => Ok(Self::FeatureXor),
            "set_xor" => Ok(Self::SetXor),
            "irregular_signal" => Ok(Self::IrregularSignal),
            other => Err(Error::InvalidConfig(format!("unknown synthetic dataset `{other}`"))),
        }
    }
}

/// Generator selection. XOR kinds use `n_samples` as the replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    #[serde(default)]
    pub irregular: IrregularParams,
}

impl SynthSpec {
    pub fn generate(&self) -> Result<SynthDataset> {
        match self.kind {
            SynthKind::FeatureXor => finish(
                SynthKind::FeatureXor,
                self.irregular.n_samples,
                0,
                feature_xor_dataset(self.irregular.n_samples),
                None,
            ),
            SynthKind::SetXor => {
                finish(SynthKind::SetXor, self.irregular.n_samples, 0, set_xor_dataset(self.irregular.n_samples), None)
            }
            SynthKind::IrregularSignal => irregular_signal_dataset(&self.irregular),
        }
    }
}

pub fn dataset_hash(samples: &[GraphSet]) -> Result<String> {
    Ok(hex::encode(Sha256::digest(dataset_to_json(samples)?.as_bytes())))
}

fn finish(
    kind: SynthKind,
    n_samples: usize,
    seed: u64,
    samples: Vec<GraphSet>,
    rule: Option<GroundTruthRule>,
) -> Result<SynthDataset> {
    let metadata = SynthMetadata {
        kind,
        n_samples,
        seed,
        rule,
        rule_description: rule.map(|r| r.description()),
        bayes_accuracy: rule.map(|r| r.bayes_accuracy(200_000, seed ^ 0xba7e5)),
        positives: samples.iter().filter(|s| s.label == 1).count(),
        hash: dataset_hash(&samples)?,
    };
    Ok(SynthDataset { samples, metadata })
}

fn spaced_path(signal: &str, gaps: &[f64], features: Vec<Vec<f64>>) -> Result<SignalGraph> {
    let mut ts = Vec::with_capacity(gaps.len() + 1);
    let mut t = 0.0;
    ts.push(t);
    for g in gaps {
        t += g;
        ts.push(t);
    }
    let n = ts.len();
    SignalGraph::from_parts(signal, ts, features, (1..n).map(|i| (i - 1, i)).collect(), true)
}

pub fn irregular_signal_dataset(params: &IrregularParams) -> Result<SynthDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let rule = params.rule();
    let unit = Exp::new(1.0).expect("positive rate");
    let mut samples = Vec::with_capacity(params.n_samples);
    for e in 0..params.n_samples {
        let mu: f64 = StandardNormal.sample(&mut rng);
        let g: f64 = StandardNormal.sample(&mut rng);
        let label = u8::from(rng.random_bool(rule.probability(mu, g)));

        let mut graphs = Vec::new();
        let n = rng.random_range(params.min_nodes..=params.max_nodes);
        let gaps: Vec<f64> = (1..n).map(|_| params.mean_gap * unit.sample(&mut rng)).collect();
        let feats = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![mu + params.value_noise * e]
            })
            .collect();
        graphs.push(spaced_path("value", &gaps, feats)?);

        let scale = params.mean_gap * g.exp();
        let gaps: Vec<f64> = (1..params.gap_nodes).map(|_| scale * unit.sample(&mut rng)).collect();
        let feats = (0..params.gap_nodes).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
        graphs.push(spaced_path("gap", &gaps, feats)?);

        let present = rng.random_range(1..=params.max_distractors);
        for k in 0..present {
            let n = rng.random_range(params.min_nodes..=params.max_nodes);
            let gaps: Vec<f64> = (1..n).map(|_| params.mean_gap * unit.sample(&mut rng)).collect();
            let feats = (0..n).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
            graphs.push(spaced_path(&format!("noise{k}"), &gaps, feats)?);
        }
        samples.push(GraphSet::new(&format!("irr-{e:06}"), label, graphs));
    }
    finish(SynthKind::IrregularSignal, params.n_samples, params.seed, samples, Some(rule))
}

/// `coeffs . x < rhs` when strict, `<=` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: Vec<i128>,
    pub rhs: i128,
    pub strict: bool,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl LinearConstraint {
    fn normalized(mut self) -> Self {
        let g = self.coeffs.iter().fold(self.rhs, |g, &c| gcd(g, c));
        if g > 1 {
            self.coeffs.iter_mut().for_each(|c| *c /= g);
            self.rhs /= g;
        }
        self
    }
}

/// Exact Fourier-Motzkin elimination over the integers. Returns true when
/// the system has a real solution.
pub fn feasible(constraints: &[LinearConstraint]) -> bool {
    let Some(n) = constraints.first().map(|c| c.coeffs.len()) else { return true };
    let mut system: Vec<LinearConstraint> = constraints.to_vec();
    for k in 0..n {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for c in system {
            match c.coeffs[k].signum() {
                1 => pos.push(c),
                -1 => neg.push(c),
                _ => rest.push(c),
            }
        }
        for p in &pos {
            for q in &neg {
                let (lp, lq) = (-q.coeffs[k], p.coeffs[k]);
                let coeffs = p.coeffs.iter().zip(&q.coeffs).map(|(a, b)| lp * a + lq * b).collect();
                let c = LinearConstraint { coeffs, rhs: lp * p.rhs + lq * q.rhs, strict: p.strict || q.strict };
                if !rest.contains(&c.clone().normalized()) {
                    rest.push(c.normalized());
                }
            }
        }
        system = rest;
    }
    system.iter().all(|c| if c.strict { 0 < c.rhs } else { 0 <= c.rhs })
}

/// Threshold constraints for `bias + phi_1(x_1) + phi_2(x_2)` to reproduce a
/// binary truth table, predicting 1 iff the sum is nonnegative. Variables:
/// `[bias, phi_1(0), phi_1(1), phi_2(0), phi_2(1)]`.
pub fn additive_threshold_system(table: [u8; 4]) -> Vec<LinearConstraint> {
    XOR_PATTERNS
        .iter()
        .zip(table)
        .map(|(&(a, b), y)| {
            let mut coeffs = vec![1i128, 0, 0, 0, 0];
            coeffs[1 + usize::from(a)] = 1;
            coeffs[3 + usize::from(b)] = 1;
            if y == 1 {
                // sum >= 0  <=>  -sum <= 0
                LinearConstraint { coeffs: coeffs.iter().map(|c| -c).collect(), rhs: 0, strict: false }
            } else {
                LinearConstraint { coeffs, rhs: 0, strict: true }
            }
        })
        .collect()
}

/// Whether any univariate additive model can realise `table`.
pub fn additive_realizable(table: [u8; 4]) -> bool {
    feasible(&additive_threshold_system(table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_xor_truth_table() {
        let d = feature_xor_dataset(3);
        assert_eq!(d.len(), 12);
        for s in &d {
            let x = &s.graphs[0].features()[0];
            assert_eq!(s.label, u8::from(x[0] != x[1]));
        }
        assert_eq!(d[0].label, 0);
        assert_eq!(d[1].label, 1);
        assert_eq!(d[3].label, 0);
    }

    #[test]
    fn set_xor_truth_table_is_order_free() {
        let d = set_xor_dataset(2);
        assert_eq!(d.len(), 8);
        for s in &d {
            let a = s.graph("A").unwrap().features()[0][0];
            let b = s.graph("B").unwrap().features()[0][0];
            assert_eq!(s.label, u8::from(a != b));
            assert_eq!(s.label, u8::from(b != a));
        }
        assert!(set_xor_partition(true).is_multi(0));
        assert!(!set_xor_partition(false).is_multi(0));
    }

    #[test]
    fn xor_is_not_additively_realizable() {
        assert!(!additive_realizable([0, 1, 1, 0]));
        assert!(!additive_realizable([1, 0, 0, 1]));
        assert!(additive_realizable([0, 0, 0, 1]));
        assert!(additive_realizable([0, 1, 1, 1]));
        assert!(additive_realizable([1, 1, 0, 0]));
    }

    #[test]
    fn fourier_motzkin_basic_cases() {
        let c = |coeffs: Vec<i128>, rhs, strict| LinearConstraint { coeffs, rhs, strict };
        // x < 1, -x <= -1  (x >= 1): infeasible
        assert!(!feasible(&[c(vec![1], 1, true), c(vec![-1], -1, false)]));
        // x <= 1, -x <= -1: x = 1
        assert!(feasible(&[c(vec![1], 1, false), c(vec![-1], -1, false)]));
        // x + y < 0, -x <= 0, -y <= 0
        assert!(!feasible(&[c(vec![1, 1], 0, true), c(vec![-1, 0], 0, false), c(vec![0, -1], 0, false)]));
    }

    #[test]
    fn irregular_dataset_is_deterministic() {
        let p = IrregularParams { n_samples: 50, seed: 4, ..IrregularParams::default() };
        let a = irregular_signal_dataset(&p).unwrap();
        let b = irregular_signal_dataset(&p).unwrap();
        assert_eq!(a.metadata.hash, b.metadata.hash);
        let c = irregular_signal_dataset(&IrregularParams { seed: 5, ..p }).unwrap();
        assert_ne!(a.metadata.hash, c.metadata.hash);
    }

    #[test]
    fn irregular_dataset_shape() {
        let p = IrregularParams { n_samples: 100, ..IrregularParams::default() };
        let d = irregular_signal_dataset(&p).unwrap();
        for s in &d.samples {
            assert!((3..=4).contains(&s.graphs.len()));
            assert_eq!(s.graph("gap").unwrap().len(), 6);
            let v = s.graph("value").unwrap();
            assert!((3..=6).contains(&v.len()));
            assert!(v.timestamps().windows(2).all(|w| w[0] <= w[1]));
            p.partition().bind(&s.graphs).unwrap();
        }
        let bayes = d.metadata.bayes_accuracy.unwrap();
        assert!(bayes > 0.5 && bayes < 1.0);
    }

    #[test]
    fn no_gap_effect_makes_rule_blind_to_gaps() {
        let r = GroundTruthRule { value_effect: 1.0, gap_effect: 0.0, sharpness: 3.0 };
        assert_eq!(r.probability(0.3, -2.0), r.probability(0.3, 5.0));
    }
}
