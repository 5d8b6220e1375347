//! The full classifier: one encoder per signal subset, DeepSets mixing for
//! subsets that can hold several graphs, and an additive scalar readout.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    reborrow, sigmoid, GradTape, Mlp, Parameters, Tensor, Var, VarCursor, CHECKPOINT_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::extgnan::{Architecture, DeltaMode, EncoderAblation, ExtGnanParams};
use crate::signal_graphs::{DeltaPolicy, FeatureGrouping, GraphSet, NormStats, SignalGraph, SubsetPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    #[default]
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Sum,
    Mean,
}

/// Model-level ablation switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    Rho1,
    MeanPool,
    NodeMlp,
    Identity,
    Gnan,
}

impl Ablation {
    pub const ALL: [Ablation; 6] =
        [Ablation::None, Ablation::Rho1, Ablation::MeanPool, Ablation::NodeMlp, Ablation::Identity, Ablation::Gnan];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Rho1 => "rho1",
            Ablation::MeanPool => "mean_pool",
            Ablation::NodeMlp => "node_mlp",
            Ablation::Identity => "identity",
            Ablation::Gnan => "gnan",
        }
    }

    pub fn encoder(self) -> EncoderAblation {
        match self {
            Ablation::Rho1 => EncoderAblation::RhoConstOne,
            Ablation::NodeMlp => EncoderAblation::NodeMlp,
            Ablation::Identity => EncoderAblation::PsiIdentity,
            Ablation::Gnan => EncoderAblation::GnanUnivariate,
            Ablation::None | Ablation::MeanPool => EncoderAblation::None,
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub delta_mode: DeltaMode,
    pub ablation: Ablation,
    pub output_bias: bool,
    pub time_scale: f64,
    pub link: Link,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            delta_mode: DeltaMode::Masked,
            ablation: Ablation::None,
            output_bias: true,
            time_scale: 1.0,
            link: Link::Sigmoid,
        }
    }
}

/// `g(pool_G f(h_G))`. With `identity_maps` both networks are bypassed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSetsParams {
    f: Mlp,
    g: Mlp,
    pooling: Pooling,
    identity_maps: bool,
}

impl DeepSetsParams {
    pub fn new(f: Mlp, g: Mlp, pooling: Pooling) -> Result<Self> {
        let d = f.input_dim();
        if f.output_dim() != d || g.input_dim() != d || g.output_dim() != d {
            return Err(Error::InvalidShape("set encoder networks must map R^d -> R^d".into()));
        }
        Ok(Self { f, g, pooling, identity_maps: false })
    }

    /// Plain mean pooling: `f` and `g` are kept for parameter layout but unused.
    pub fn mean_pool(f: Mlp, g: Mlp) -> Result<Self> {
        let mut s = Self::new(f, g, Pooling::Mean)?;
        s.identity_maps = true;
        Ok(s)
    }

    pub fn f(&self) -> &Mlp {
        &self.f
    }

    pub fn g(&self) -> &Mlp {
        &self.g
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn dim(&self) -> usize {
        self.f.input_dim()
    }

    fn tensor_count(&self) -> usize {
        self.f.tensor_count() + self.g.tensor_count()
    }

    /// `reps` is `m x d`, one graph representation per row, `m >= 1`.
    fn forward_tape(
        &self,
        tape: &mut GradTape,
        vars: &[Var],
        reps: Var,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let (f_vars, g_vars) = vars.split_at(self.f.tensor_count());
        let (m, d) = tape.shape(reps);
        let mapped =
            if self.identity_maps { reps } else { self.f.forward_tape(tape, f_vars, reps, reborrow(&mut dropout))? };
        // Sum in a canonical row order so that graph order cannot change a bit.
        let values = tape.value(mapped);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&values[a * d..(a + 1) * d], &values[b * d..(b + 1) * d]);
            ra.iter().zip(rb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let sorted = tape.gather_rows(mapped, order)?;
        let mut pooled = tape.sum_rows(sorted);
        if self.pooling == Pooling::Mean {
            pooled = tape.scale(pooled, 1.0 / m as f64);
        }
        if self.identity_maps {
            Ok(pooled)
        } else {
            self.g.forward_tape(tape, g_vars, pooled, dropout)
        }
    }
}

impl Parameters for DeepSetsParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut out = self.f.params();
        out.extend(self.g.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.f.params_mut();
        out.extend(self.g.params_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetModule {
    pub name: String,
    pub encoder: ExtGnanParams,
    pub mixer: Option<DeepSetsParams>,
}

impl SubsetModule {
    pub fn rep_dim(&self) -> usize {
        self.encoder.width()
    }

    fn tensor_count(&self) -> usize {
        self.encoder.tensor_count() + self.mixer.as_ref().map_or(0, DeepSetsParams::tensor_count)
    }

    /// `None` when the subset has no graphs in this sample.
    fn forward_tape(
        &self,
        tape: &mut GradTape,
        vars: &[Var],
        graphs: &[&SignalGraph],
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Option<Var>> {
        if graphs.is_empty() {
            return Ok(None);
        }
        let (enc_vars, mix_vars) = vars.split_at(self.encoder.tensor_count());
        let mut reps = Vec::with_capacity(graphs.len());
        for g in graphs {
            reps.push(self.encoder.encode_tape(tape, enc_vars, g, reborrow(&mut dropout))?.graph);
        }
        match &self.mixer {
            None => {
                if reps.len() > 1 {
                    return Err(Error::Partition(format!("subset `{}` holds a single graph", self.name)));
                }
                Ok(Some(reps[0]))
            }
            Some(mixer) => {
                let stacked = if reps.len() == 1 { reps[0] } else { tape.concat_rows(reps)? };
                Ok(Some(mixer.forward_tape(tape, mix_vars, stacked, dropout)?))
            }
        }
    }
}

impl Parameters for SubsetModule {
    fn params(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.params();
        if let Some(m) = &self.mixer {
            out.extend(m.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        if let Some(m) = &mut self.mixer {
            out.extend(m.params_mut());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermanModel {
    subsets: Vec<SubsetModule>,
    partition: SubsetPartition,
    link: Link,
    output_bias: Tensor,
    learn_bias: bool,
}

/// Tape handles for one sample.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logit: Var,
    pub subset_reps: Vec<Option<Var>>,
}

/// Plain evaluation of one sample with all intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub logit: f64,
    /// Zero vectors for absent subsets.
    pub subset_reps: Vec<Vec<f64>>,
    /// `sum_c [h_i]_c` per subset.
    pub contributions: Vec<f64>,
}

impl SupermanModel {
    /// Builds and initialises a model for `partition`. `groupings` must hold
    /// an entry for every declared signal; all members of a subset share one
    /// encoder and therefore one grouping.
    pub fn build(
        partition: SubsetPartition,
        groupings: &BTreeMap<String, FeatureGrouping>,
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modules = Vec::with_capacity(partition.len());
        for (i, members) in partition.subsets().iter().enumerate() {
            let mut grouping: Option<&FeatureGrouping> = None;
            for m in members {
                let g = groupings
                    .get(m)
                    .ok_or_else(|| Error::Partition(format!("no feature grouping for signal `{m}`")))?;
                match grouping {
                    Some(prev) if prev != g => {
                        return Err(Error::Partition(format!(
                            "signals of subset `{}` need identical feature groupings",
                            partition.subset_name(i)
                        )))
                    }
                    _ => grouping = Some(g),
                }
            }
            let mut grouping = grouping.expect("subsets are nonempty").clone();
            if config.ablation == Ablation::Gnan {
                grouping = FeatureGrouping::singletons(grouping.width());
            }
            let d = grouping.width();
            let encoder =
                ExtGnanParams::new(grouping, config.delta_mode, config.ablation.encoder(), &config.arch, &mut rng)?
                    .with_time_scale(config.time_scale)?;
            let mixer = if partition.is_multi(i) {
                let a = &config.arch;
                let f = Mlp::with_hidden(d, a.hidden, a.layers, d, a.activation, a.dropout, &mut rng)?;
                let g = Mlp::with_hidden(d, a.hidden, a.layers, d, a.activation, a.dropout, &mut rng)?;
                Some(if config.ablation == Ablation::MeanPool {
                    DeepSetsParams::mean_pool(f, g)?
                } else {
                    DeepSetsParams::new(f, g, Pooling::Sum)?
                })
            } else {
                None
            };
            modules.push(SubsetModule { name: partition.subset_name(i), encoder, mixer });
        }
        Self::from_modules(partition, modules, config.link, 0.0, config.output_bias)
    }

    pub fn from_modules(
        partition: SubsetPartition,
        subsets: Vec<SubsetModule>,
        link: Link,
        output_bias: f64,
        learn_bias: bool,
    ) -> Result<Self> {
        if subsets.len() != partition.len() {
            return Err(Error::Partition(format!("{} subset modules for {} subsets", subsets.len(), partition.len())));
        }
        for (i, m) in subsets.iter().enumerate() {
            if m.mixer.is_some() != partition.is_multi(i) {
                return Err(Error::Partition(format!(
                    "subset `{}`: set encoder present iff the subset can hold several graphs",
                    m.name
                )));
            }
            if let Some(mix) = &m.mixer {
                if mix.dim() != m.rep_dim() {
                    return Err(Error::InvalidShape(format!("subset `{}`: set encoder width mismatch", m.name)));
                }
            }
        }
        Ok(Self { subsets, partition, link, output_bias: Tensor::scalar(output_bias), learn_bias })
    }

    pub fn subsets(&self) -> &[SubsetModule] {
        &self.subsets
    }

    pub fn subsets_mut(&mut self) -> &mut [SubsetModule] {
        &mut self.subsets
    }

    pub fn partition(&self) -> &SubsetPartition {
        &self.partition
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn output_bias(&self) -> f64 {
        self.output_bias.values()[0]
    }

    pub fn set_output_bias(&mut self, b: f64) {
        self.output_bias = Tensor::scalar(b);
    }

    pub fn tensor_count(&self) -> usize {
        self.subsets.iter().map(SubsetModule::tensor_count).sum::<usize>() + usize::from(self.learn_bias)
    }

    /// Records the whole model on `tape` for one sample.
    pub fn forward_tape(
        &self,
        tape: &mut GradTape,
        vars: &[Var],
        sample: &GraphSet,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<ForwardTrace> {
        if vars.len() != self.tensor_count() {
            return Err(Error::InvalidShape("model parameter count mismatch".into()));
        }
        let binding = self.partition.bind(&sample.graphs)?;
        let mut cursor = VarCursor::new(vars);
        let mut reps = Vec::with_capacity(self.subsets.len());
        let mut contributions = Vec::new();
        for (module, idx) in self.subsets.iter().zip(&binding) {
            let mv = cursor.take(module.tensor_count())?;
            let graphs: Vec<&SignalGraph> = idx.iter().map(|&g| &sample.graphs[g]).collect();
            let rep = module.forward_tape(tape, mv, &graphs, reborrow(&mut dropout))?;
            if let Some(r) = rep {
                contributions.push(tape.sum_all(r));
            }
            reps.push(rep);
        }
        let bias = if self.learn_bias { cursor.take(1)?[0] } else { tape.constant(&self.output_bias) };
        let logit = if contributions.is_empty() {
            bias
        } else {
            let row = if contributions.len() == 1 { contributions[0] } else { tape.concat_cols(contributions)? };
            let total = tape.sum_all(row);
            tape.add(bias, total)?
        };
        Ok(ForwardTrace { logit, subset_reps: reps })
    }

    pub fn evaluate(&self, sample: &GraphSet) -> Result<Evaluation> {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect();
        let trace = self.forward_tape(&mut tape, &vars, sample, None)?;
        tape.check_finite()?;
        let subset_reps: Vec<Vec<f64>> = trace
            .subset_reps
            .iter()
            .zip(&self.subsets)
            .map(|(r, m)| r.map_or_else(|| vec![0.0; m.rep_dim()], |v| tape.value(v).to_vec()))
            .collect();
        let contributions = trace.subset_reps.iter().map(|r| r.map_or(0.0, |v| tape.value(v).iter().sum())).collect();
        Ok(Evaluation { logit: tape.scalar(trace.logit), subset_reps, contributions })
    }

    /// Scalar logit.
    pub fn forward(&self, sample: &GraphSet) -> Result<f64> {
        Ok(self.evaluate(sample)?.logit)
    }

    pub fn predict_proba(&self, sample: &GraphSet) -> Result<f64> {
        if self.link != Link::Sigmoid {
            return Err(Error::InvalidConfig("probabilities need the sigmoid link".into()));
        }
        Ok(sigmoid(self.forward(sample)?))
    }

    /// `Phi_i(S_i)` for subset `i` given that subset's graphs.
    pub fn subset_representation(&self, i: usize, graphs: &[SignalGraph]) -> Result<Vec<f64>> {
        let module = self.subsets.get(i).ok_or_else(|| Error::Partition(format!("subset index {i} out of range")))?;
        let binding = self.partition.bind(graphs)?;
        if binding.iter().enumerate().any(|(s, b)| s != i && !b.is_empty()) {
            return Err(Error::Partition(format!("graphs outside subset `{}`", module.name)));
        }
        let mut tape = GradTape::new();
        let vars: Vec<Var> = module.params().into_iter().map(|p| tape.constant(p)).collect();
        let refs: Vec<&SignalGraph> = graphs.iter().collect();
        let rep = module.forward_tape(&mut tape, &vars, &refs, None)?;
        tape.check_finite()?;
        Ok(rep.map_or_else(|| vec![0.0; module.rep_dim()], |v| tape.value(v).to_vec()))
    }
}

impl Parameters for SupermanModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.subsets.iter().flat_map(|s| s.params()).collect();
        if self.learn_bias {
            out.push(&self.output_bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.subsets.iter_mut().flat_map(|s| s.params_mut()).collect();
        if self.learn_bias {
            out.push(&mut self.output_bias);
        }
        out
    }
}

/// Model plus the normalisation statistics it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model: SupermanModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormStats>,
    /// Sparsity policy applied to inputs before they reach the model.
    #[serde(default)]
    pub delta_policy: DeltaPolicy,
}

impl ModelCheckpoint {
    pub fn new(model: SupermanModel, norm: Option<NormStats>) -> Self {
        Self { format_version: CHECKPOINT_FORMAT_VERSION, model, norm, delta_policy: DeltaPolicy::Full }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint format version {}", ck.format_version)));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, OutputActivation};
    use crate::signal_graphs::Collector;
    use rand::Rng;

    fn single(signal: &str, t: f64, x: Vec<f64>) -> SignalGraph {
        SignalGraph::from_parts(signal, vec![t], vec![x], vec![], true).unwrap()
    }

    fn affine(w: Vec<f64>, b: Vec<f64>) -> Mlp {
        let (rows, cols) = (w.len() / b.len(), b.len());
        Mlp::affine(Tensor::matrix(rows, cols, w).unwrap(), b).unwrap()
    }

    fn identity_encoder(width: usize, rho: f64) -> ExtGnanParams {
        let eye = (0..width * width).map(|i| if i % (width + 1) == 0 { 1.0 } else { 0.0 }).collect();
        ExtGnanParams::from_parts(
            affine(vec![0.0], vec![rho]),
            vec![affine(eye, vec![0.0; width])],
            FeatureGrouping::joint(width),
            DeltaMode::Masked,
            EncoderAblation::None,
        )
        .unwrap()
    }

    fn random_model(partition: SubsetPartition, seed: u64) -> SupermanModel {
        let mut groupings = BTreeMap::new();
        for s in partition.subsets().iter().flatten() {
            groupings.insert(s.clone(), FeatureGrouping::new(vec![vec![0], vec![1]]).unwrap());
        }
        let config = ModelConfig {
            arch: Architecture { hidden: 5, layers: 3, activation: Activation::Tanh, dropout: 0.0 },
            ..ModelConfig::default()
        };
        let mut m = SupermanModel::build(partition, &groupings, &config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for t in m.params_mut() {
            for v in t.values_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        m
    }

    fn random_graph(rng: &mut ChaCha8Rng, signal: &str) -> SignalGraph {
        let n = rng.random_range(1..4);
        let mut ts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        ts.sort_by(f64::total_cmp);
        let feats = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        SignalGraph::from_parts(signal, ts, feats, (1..n).map(|i| (i - 1, i)).collect(), true).unwrap()
    }

    #[test]
    fn empty_sample_gives_output_bias() {
        let mut m = random_model(SubsetPartition::from_slices(&[&["a"], &["b", "c"]]).unwrap(), 1);
        m.set_output_bias(0.37);
        let s = GraphSet::new("e", 0, vec![]);
        assert_eq!(m.forward(&s).unwrap(), 0.37);
    }

    #[test]
    fn one_node_identity_model_sums_features() {
        let p = SubsetPartition::from_slices(&[&["a"]]).unwrap();
        let module = SubsetModule { name: "a".into(), encoder: identity_encoder(3, 1.0), mixer: None };
        let m = SupermanModel::from_modules(p, vec![module], Link::Sigmoid, -0.25, true).unwrap();
        let s = GraphSet::new("e", 1, vec![single("a", 0.0, vec![0.5, 1.5, -3.0])]);
        assert!((m.forward(&s).unwrap() - (-0.25 + 0.5 + 1.5 - 3.0)).abs() < 1e-15);
        let expected = 1.0 / (1.0 + (1.25f64).exp());
        assert!((m.predict_proba(&s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn feature_xor_construction() {
        // psi(x1, x2) = x1 + x2 - 2 x1 x2 summed over its two outputs, built
        // from a ReLU net: relu(x1 + x2) - 2 relu(x1 + x2 - 1) on binary input.
        let w0 = vec![1.0, 1.0, 1.0, 1.0];
        let b0 = vec![0.0, -1.0];
        let w1 = vec![0.5, 0.5, -1.0, -1.0];
        let b1 = vec![0.0, 0.0];
        let psi = Mlp::new(vec![2, 2, 2], Activation::Relu, OutputActivation::Identity, 0.0).unwrap();
        let mut psi = psi;
        {
            let ps = psi.params_mut();
            let vals = [w0, b0, w1, b1];
            for (t, v) in ps.into_iter().zip(vals) {
                t.values_mut().copy_from_slice(&v);
            }
        }
        let enc = ExtGnanParams::from_parts(
            affine(vec![0.0], vec![1.0]),
            vec![psi],
            FeatureGrouping::joint(2),
            DeltaMode::Masked,
            EncoderAblation::None,
        )
        .unwrap();
        let p = SubsetPartition::from_slices(&[&["x"]]).unwrap();
        let m = SupermanModel::from_modules(
            p,
            vec![SubsetModule { name: "x".into(), encoder: enc, mixer: None }],
            Link::Sigmoid,
            0.0,
            false,
        )
        .unwrap();
        let outs: Vec<f64> = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
            .iter()
            .map(|&(a, b)| m.forward(&GraphSet::new("e", 0, vec![single("x", 0.0, vec![a, b])])).unwrap())
            .collect();
        assert_eq!(outs, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn set_xor_construction() {
        // f(x) = x, g(s) = s(2 - s) = 1 - (s - 1)^2; on s in {0,1,2} this equals
        // relu(s) - 2 relu(s - 1).
        let f = affine(vec![1.0], vec![0.0]);
        let mut g = Mlp::new(vec![1, 2, 1], Activation::Relu, OutputActivation::Identity, 0.0).unwrap();
        for (t, v) in g.params_mut().into_iter().zip([vec![1.0, 1.0], vec![0.0, -1.0], vec![1.0, -2.0], vec![0.0]]) {
            t.values_mut().copy_from_slice(&v);
        }
        let mixer = DeepSetsParams::new(f, g, Pooling::Sum).unwrap();
        let p = SubsetPartition::from_slices(&[&["A", "B"]]).unwrap();
        let module = SubsetModule { name: "A+B".into(), encoder: identity_encoder(1, 1.0), mixer: Some(mixer) };
        let m = SupermanModel::from_modules(p, vec![module], Link::Sigmoid, 0.0, false).unwrap();
        for (a, b, want) in [(0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)] {
            let s = GraphSet::new("e", 0, vec![single("A", 0.0, vec![a]), single("B", 0.0, vec![b])]);
            assert_eq!(m.forward(&s).unwrap(), want);
            let s_poly: f64 = a + b;
            assert_eq!(want, s_poly * (2.0 - s_poly));
        }
    }

    #[test]
    fn multi_graph_subsets_are_permutation_invariant() {
        let p = SubsetPartition::from_slices(&[&["a", "b", "c", "d"]]).unwrap();
        let m = random_model(p, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let graphs: Vec<SignalGraph> = ["a", "b", "c", "d"].iter().map(|s| random_graph(&mut rng, s)).collect();
        let base = m.subset_representation(0, &graphs).unwrap();
        let mut perm = graphs.clone();
        for _ in 0..10 {
            let i = rng.random_range(0..4);
            let j = rng.random_range(0..4);
            perm.swap(i, j);
            assert_eq!(m.subset_representation(0, &perm).unwrap(), base);
        }
    }

    #[test]
    fn singleton_subset_passes_graph_representation_through() {
        let p = SubsetPartition::from_slices(&[&["a"], &["b"]]).unwrap();
        let m = random_model(p, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(&mut rng, "a");
        assert_eq!(
            m.subset_representation(0, std::slice::from_ref(&g)).unwrap(),
            m.subsets()[0].encoder.graph_representation(&g).unwrap()
        );
        assert!(matches!(m.subset_representation(1, &[g]), Err(Error::Partition(_))));
    }

    #[test]
    fn logit_is_bias_plus_subset_contributions() {
        let p = SubsetPartition::from_slices(&[&["a"], &["b", "c"], &["d"]]).unwrap();
        let m = random_model(p, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let graphs: Vec<SignalGraph> = ["a", "b", "c", "d"].iter().map(|s| random_graph(&mut rng, s)).collect();
        let full = GraphSet::new("e", 1, graphs.clone());
        let ev = m.evaluate(&full).unwrap();
        let total = ev.contributions.iter().fold(0.0, |a, c| a + c);
        assert_eq!(ev.logit, m.output_bias() + total);
        let without_d = GraphSet::new("e", 1, graphs[..3].to_vec());
        let ev2 = m.evaluate(&without_d).unwrap();
        assert_eq!(ev2.contributions[..2], ev.contributions[..2]);
        assert_eq!(ev2.contributions[2], 0.0);
        assert!((ev.logit - ev2.logit - ev.contributions[2]).abs() < 1e-12);
    }

    #[test]
    fn unknown_signal_is_schema_error() {
        let m = random_model(SubsetPartition::from_slices(&[&["a"]]).unwrap(), 1);
        let s = GraphSet::new("e", 0, vec![single("zzz", 0.0, vec![1.0, 2.0])]);
        assert!(matches!(m.forward(&s), Err(Error::Schema(_))));
    }

    #[test]
    fn collector_binds_many_small_graphs() {
        let p = SubsetPartition::from_slices(&[&["tweet"]])
            .unwrap()
            .with_collector(Collector { subset: 0, max_nodes: 1 })
            .unwrap();
        let m = random_model(p, 4);
        assert!(m.subsets()[0].mixer.is_some());
        let s = GraphSet::new(
            "e",
            0,
            vec![
                single("tweet", 0.0, vec![1.0, 0.0]),
                single("u1", 0.0, vec![0.5, 0.5]),
                single("u2", 1.0, vec![0.0, 1.0]),
            ],
        );
        assert!(m.forward(&s).unwrap().is_finite());
    }

    #[test]
    fn extreme_logit_gives_finite_probability() {
        let p = SubsetPartition::from_slices(&[&["a"]]).unwrap();
        let module = SubsetModule { name: "a".into(), encoder: identity_encoder(1, 1.0), mixer: None };
        let m = SupermanModel::from_modules(p, vec![module], Link::Sigmoid, 0.0, true).unwrap();
        let s = GraphSet::new("e", 0, vec![single("a", 0.0, vec![1e6])]);
        assert_eq!(m.predict_proba(&s).unwrap(), 1.0);
        let s = GraphSet::new("e", 0, vec![single("a", 0.0, vec![0.0])]);
        assert_eq!(m.predict_proba(&s).unwrap(), 0.5);
    }

    #[test]
    fn ablation_names_roundtrip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert!("bogus".parse::<Ablation>().is_err());
    }

    #[test]
    fn gnan_ablation_forces_singleton_groups() {
        let p = SubsetPartition::from_slices(&[&["a"]]).unwrap();
        let mut groupings = BTreeMap::new();
        groupings.insert("a".to_string(), FeatureGrouping::joint(3));
        let config = ModelConfig { ablation: Ablation::Gnan, ..ModelConfig::default() };
        let m = SupermanModel::build(p, &groupings, &config, 0).unwrap();
        assert_eq!(m.subsets()[0].encoder.psi().len(), 3);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let m = random_model(SubsetPartition::from_slices(&[&["a"], &["b", "c"]]).unwrap(), 9);
        let ck = ModelCheckpoint::new(m, Some(NormStats::default()));
        let back = ModelCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }
}
