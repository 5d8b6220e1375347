//! Exact additive attributions and perturbation analyses.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::sigmoid;
use crate::error::{Error, Result};
use crate::signal_graphs::{GraphSet, NormStats};
use crate::superman::{Link, SupermanModel};
use crate::training::{auprc, auroc, predict_logits, ReliabilityBin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeContribution {
    pub index: usize,
    pub timestamp: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphContribution {
    pub signal_type: String,
    pub contribution: f64,
    pub nodes: Vec<NodeContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetContribution {
    pub subset: String,
    pub contribution: f64,
    /// Filled only for subsets whose single graph is not mixed with others.
    pub graphs: Vec<GraphContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub entity_id: String,
    pub logit: f64,
    pub output_bias: f64,
    pub subsets: Vec<SubsetContribution>,
    /// `|logit - bias - sum of subset contributions|`.
    pub reconstruction_residual: f64,
}

fn locate(model: &SupermanModel, sample: &GraphSet, signal_type: &str) -> Result<(usize, usize)> {
    let gi = sample
        .graphs
        .iter()
        .position(|g| g.signal_type() == signal_type)
        .ok_or_else(|| Error::Schema(format!("sample `{}` has no `{signal_type}` graph", sample.entity_id)))?;
    let binding = model.partition().bind(&sample.graphs)?;
    let subset = binding.iter().position(|b| b.contains(&gi)).expect("bound graph");
    if model.partition().is_multi(subset) {
        return Err(Error::NotNodeAttributable(model.partition().subset_name(subset)));
    }
    Ok((subset, gi))
}

/// Node `j` of graph `signal_type`: the column sum of the pair terms.
pub fn node_contribution(model: &SupermanModel, sample: &GraphSet, signal_type: &str, node: usize) -> Result<f64> {
    let (subset, gi) = locate(model, sample, signal_type)?;
    let graph = &sample.graphs[gi];
    if node >= graph.len() {
        return Err(Error::InvalidNode { index: node, len: graph.len() });
    }
    let terms = model.subsets()[subset].encoder.node_contribution_terms(graph)?;
    Ok(terms.iter().map(|row| row[node]).sum())
}

pub fn graph_contribution(model: &SupermanModel, sample: &GraphSet, signal_type: &str) -> Result<f64> {
    let (subset, gi) = locate(model, sample, signal_type)?;
    let terms = model.subsets()[subset].encoder.node_contribution_terms(&sample.graphs[gi])?;
    let n = terms.len();
    Ok((0..n).map(|j| terms.iter().map(|row| row[j]).sum::<f64>()).sum())
}

/// `sum_c [h_i]_c`; zero for a subset with no graphs in the sample.
pub fn subset_contribution(model: &SupermanModel, sample: &GraphSet, subset: usize) -> Result<f64> {
    let ev = model.evaluate(sample)?;
    ev.contributions.get(subset).copied().ok_or_else(|| Error::Partition(format!("subset index {subset} out of range")))
}

pub fn explain(model: &SupermanModel, sample: &GraphSet) -> Result<ContributionReport> {
    let ev = model.evaluate(sample)?;
    let binding = model.partition().bind(&sample.graphs)?;
    let mut subsets = Vec::with_capacity(binding.len());
    for (i, idx) in binding.iter().enumerate() {
        let module = &model.subsets()[i];
        let mut graphs = Vec::new();
        if !model.partition().is_multi(i) {
            for &gi in idx {
                let g = &sample.graphs[gi];
                let terms = module.encoder.node_contribution_terms(g)?;
                let nodes: Vec<NodeContribution> = (0..g.len())
                    .map(|j| NodeContribution {
                        index: j,
                        timestamp: g.timestamps()[j],
                        contribution: terms.iter().map(|row| row[j]).sum(),
                    })
                    .collect();
                graphs.push(GraphContribution {
                    signal_type: g.signal_type().to_string(),
                    contribution: nodes.iter().map(|n| n.contribution).sum(),
                    nodes,
                });
            }
        }
        subsets.push(SubsetContribution { subset: module.name.clone(), contribution: ev.contributions[i], graphs });
    }
    let total: f64 = ev.contributions.iter().sum();
    Ok(ContributionReport {
        entity_id: sample.entity_id.clone(),
        logit: ev.logit,
        output_bias: model.output_bias(),
        subsets,
        reconstruction_residual: (ev.logit - model.output_bias() - total).abs(),
    })
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per node of attributable graphs and one row (empty graph and
/// node columns) per mixed subset.
pub fn contributions_csv(reports: &[ContributionReport]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["entity", "subset", "graph", "node_index", "timestamp", "contribution"])?;
        for r in reports {
            for s in &r.subsets {
                if s.graphs.is_empty() {
                    w.write_record([&r.entity_id, &s.subset, "", "", "", &s.contribution.to_string()])?;
                }
                for g in &s.graphs {
                    for n in &g.nodes {
                        w.write_record([
                            &r.entity_id,
                            &s.subset,
                            &g.signal_type,
                            &n.index.to_string(),
                            &n.timestamp.to_string(),
                            &n.contribution.to_string(),
                        ])?;
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn reliability_csv(bins: &[ReliabilityBin]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["bin_center", "confidence", "accuracy", "count"])?;
        for b in bins {
            w.write_record([
                b.bin_center.to_string(),
                b.confidence.to_string(),
                b.accuracy.to_string(),
                b.count.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Leading eigenvector of the covariance of `rows`, signed so that its
/// largest-magnitude entry is positive.
pub fn principal_component(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.len() < 2 || d == 0 {
        return Err(Error::DegenerateDirection("need at least two rows and one feature".into()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / n;
            }
        }
    }
    let scale = cov.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let eig = SymmetricEigen::new(cov);
    let (k, &lambda) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("d >= 1");
    if !(scale > 0.0 && lambda > 0.0) {
        return Err(Error::DegenerateDirection("feature matrix has rank zero".into()));
    }
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).expect("nonempty");
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub target: String,
    pub direction: Vec<f64>,
    pub noise_levels: Vec<f64>,
    /// Mean model output over the dataset at each level.
    pub outputs: Vec<f64>,
    pub stds: Vec<f64>,
}

impl PerturbationCurve {
    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["level", "mean_output", "std"])?;
            for ((l, m), s) in self.noise_levels.iter().zip(&self.outputs).zip(&self.stds) {
                w.write_record([l.to_string(), m.to_string(), s.to_string()])?;
            }
            Ok(())
        })
    }
}

fn output(model: &SupermanModel, logit: f64) -> f64 {
    match model.link() {
        Link::Sigmoid => sigmoid(logit),
        Link::Identity => logit,
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

/// Shifts every node feature of `subset` along its first principal
/// component by each level and records the mean model output.
pub fn pca_perturbation_curve(
    model: &SupermanModel,
    dataset: &[GraphSet],
    subset: usize,
    noise_levels: &[f64],
) -> Result<PerturbationCurve> {
    if subset >= model.partition().len() {
        return Err(Error::Partition(format!("subset index {subset} out of range")));
    }
    let bindings = dataset.iter().map(|s| model.partition().bind(&s.graphs)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (s, b) in dataset.iter().zip(&bindings) {
        for &gi in &b[subset] {
            rows.extend(s.graphs[gi].features().iter().cloned());
        }
    }
    let direction = principal_component(&rows)?;
    let mut outputs = Vec::with_capacity(noise_levels.len());
    let mut stds = Vec::with_capacity(noise_levels.len());
    for &eps in noise_levels {
        let mut values = Vec::with_capacity(dataset.len());
        for (s, b) in dataset.iter().zip(&bindings) {
            let logit = if eps == 0.0 {
                model.forward(s)?
            } else {
                let mut shifted = s.clone();
                for &gi in &b[subset] {
                    for row in shifted.graphs[gi].features_mut() {
                        for (x, d) in row.iter_mut().zip(&direction) {
                            *x += eps * d;
                        }
                    }
                }
                model.forward(&shifted)?
            };
            values.push(output(model, logit));
        }
        let (m, sd) = mean_std(&values);
        outputs.push(m);
        stds.push(sd);
    }
    Ok(PerturbationCurve {
        target: model.partition().subset_name(subset),
        direction,
        noise_levels: noise_levels.to_vec(),
        outputs,
        stds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `v + e * sigma` on feature 0.
    Additive,
    /// `v + e * |v| * sigma` on feature 0.
    Multiplicative,
    /// Gaussian noise with std `sigma` on the temporal distances.
    Temporal,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Self::Additive),
            "multiplicative" => Ok(Self::Multiplicative),
            "temporal" => Ok(Self::Temporal),
            other => Err(Error::InvalidConfig(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub sigma: f64,
    pub delta_auroc_pct: f64,
    pub delta_auroc_std: f64,
    pub delta_auprc_pct: f64,
    pub delta_auprc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub kind: NoiseKind,
    pub seeds: Vec<u64>,
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessTable {
    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["sigma", "delta_auroc_pct", "delta_auroc_std", "delta_auprc_pct", "delta_auprc_std"])?;
            for r in &self.rows {
                w.write_record([
                    r.sigma.to_string(),
                    r.delta_auroc_pct.to_string(),
                    r.delta_auroc_std.to_string(),
                    r.delta_auprc_pct.to_string(),
                    r.delta_auprc_std.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

/// Applies one draw of test-time noise at level `sigma` to a raw dataset.
pub fn inject_noise(dataset: &[GraphSet], kind: NoiseKind, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<GraphSet> {
    let mut out = dataset.to_vec();
    for g in out.iter_mut().flat_map(|s| s.graphs.iter_mut()) {
        match kind {
            NoiseKind::Additive | NoiseKind::Multiplicative => {
                for row in g.features_mut() {
                    if let Some(v) = row.first_mut() {
                        let e: f64 = StandardNormal.sample(rng);
                        let scale = if kind == NoiseKind::Additive { sigma } else { v.abs() * sigma };
                        *v += e * scale;
                    }
                }
            }
            NoiseKind::Temporal => g.add_delta_noise(|| {
                let e: f64 = StandardNormal.sample(rng);
                e * sigma
            }),
        }
    }
    out
}

fn metric_pair(model: &SupermanModel, data: &[GraphSet], labels: &[u8]) -> Result<(f64, f64)> {
    let scores = predict_logits(model, data)?;
    Ok((auroc(&scores, labels)?, auprc(&scores, labels)?))
}

/// Relative change (percent) of AUROC and AUPRC under test-time noise, per
/// level, as mean and population std over `seeds`. `norm` is applied after
/// the noise, the way a deployed model would see the data.
pub fn noise_robustness(
    model: &SupermanModel,
    dataset: &[GraphSet],
    spec: &NoiseSpec,
    seeds: &[u64],
    norm: Option<&NormStats>,
) -> Result<RobustnessTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("noise robustness needs at least one seed".into()));
    }
    let labels: Vec<u8> = dataset.iter().map(|s| s.label).collect();
    let prepare = |mut d: Vec<GraphSet>| -> Result<Vec<GraphSet>> {
        if let Some(n) = norm {
            n.apply(&mut d)?;
        }
        Ok(d)
    };
    let clean = prepare(dataset.to_vec())?;
    let (roc0, pr0) = metric_pair(model, &clean, &labels)?;
    let mut rows = Vec::with_capacity(spec.levels.len());
    for (li, &sigma) in spec.levels.iter().enumerate() {
        let mut d_roc = Vec::with_capacity(seeds.len());
        let mut d_pr = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x0001_0000_0001).wrapping_add(li as u64));
            let noisy = prepare(inject_noise(dataset, spec.kind, sigma, &mut rng))?;
            let (roc, pr) = metric_pair(model, &noisy, &labels)?;
            d_roc.push((roc - roc0) / roc0 * 100.0);
            d_pr.push((pr - pr0) / pr0 * 100.0);
        }
        let (rm, rs) = mean_std(&d_roc);
        let (pm, ps) = mean_std(&d_pr);
        rows.push(RobustnessRow {
            sigma,
            delta_auroc_pct: rm,
            delta_auroc_std: rs,
            delta_auprc_pct: pm,
            delta_auprc_std: ps,
        });
    }
    Ok(RobustnessTable { kind: spec.kind, seeds: seeds.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, Parameters};
    use crate::extgnan::{Architecture, DeltaMode, EncoderAblation, ExtGnanParams};
    use crate::signal_graphs::{FeatureGrouping, SignalGraph, SubsetPartition};
    use crate::superman::{ModelConfig, SubsetModule};
    use rand::Rng;
    use std::collections::BTreeMap;

    fn model(partition: SubsetPartition, seed: u64, ablation: crate::superman::Ablation) -> SupermanModel {
        let mut groupings = BTreeMap::new();
        for s in partition.subsets().iter().flatten() {
            groupings.insert(s.clone(), FeatureGrouping::new(vec![vec![0], vec![1]]).unwrap());
        }
        let config = ModelConfig {
            arch: Architecture { hidden: 6, layers: 2, activation: Activation::Tanh, dropout: 0.0 },
            ablation,
            ..ModelConfig::default()
        };
        let mut m = SupermanModel::build(partition, &groupings, &config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in m.params_mut() {
            for v in t.values_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        m
    }

    fn graph(rng: &mut ChaCha8Rng, signal: &str, n: usize) -> SignalGraph {
        let mut ts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        ts.sort_by(f64::total_cmp);
        let feats = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        SignalGraph::from_parts(signal, ts, feats, (1..n).map(|i| (i - 1, i)).collect(), true).unwrap()
    }

    fn sample(rng: &mut ChaCha8Rng, id: usize) -> GraphSet {
        let graphs = vec![graph(rng, "a", 3), graph(rng, "b", 2), graph(rng, "c", 4)];
        GraphSet::new(&format!("e{id}"), u8::from(rng.random_bool(0.5)), graphs)
    }

    fn partition() -> SubsetPartition {
        SubsetPartition::from_slices(&[&["a"], &["b", "c"]]).unwrap()
    }

    #[test]
    fn contribution_chain_reconstructs_logit() {
        let m = model(partition(), 1, crate::superman::Ablation::None);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..20 {
            let s = sample(&mut rng, i);
            let r = explain(&m, &s).unwrap();
            assert!(r.reconstruction_residual < 1e-9);
            let a = &r.subsets[0];
            assert!((a.graphs[0].contribution - a.contribution).abs() < 1e-9);
            let node_sum: f64 = a.graphs[0].nodes.iter().map(|n| n.contribution).sum();
            assert!((node_sum - graph_contribution(&m, &s, "a").unwrap()).abs() < 1e-12);
            let h: f64 = m.subsets()[0].encoder.node_representation(&s.graphs[0], 1).unwrap().values.iter().sum();
            assert!((node_contribution(&m, &s, "a", 1).unwrap() - h).abs() < 1e-12);
            assert!(r.subsets[1].graphs.is_empty());
        }
    }

    #[test]
    fn mixed_subsets_are_not_node_attributable() {
        let m = model(partition(), 1, crate::superman::Ablation::None);
        let s = sample(&mut ChaCha8Rng::seed_from_u64(3), 0);
        assert!(matches!(node_contribution(&m, &s, "b", 0), Err(Error::NotNodeAttributable(_))));
        assert!(subset_contribution(&m, &s, 1).unwrap().is_finite());
    }

    #[test]
    fn absent_subset_contributes_zero() {
        let m = model(partition(), 1, crate::superman::Ablation::None);
        let mut s = sample(&mut ChaCha8Rng::seed_from_u64(3), 0);
        s.graphs.truncate(1);
        assert_eq!(subset_contribution(&m, &s, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_node_contribution_is_subset_contribution() {
        let m = model(SubsetPartition::from_slices(&[&["a"]]).unwrap(), 4, crate::superman::Ablation::None);
        let s = GraphSet::new("e", 0, vec![graph(&mut ChaCha8Rng::seed_from_u64(1), "a", 1)]);
        let node = node_contribution(&m, &s, "a", 0).unwrap();
        assert!((node - subset_contribution(&m, &s, 0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pca_matches_closed_form_2x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let t: f64 = rng.random_range(-1.0..1.0);
                vec![2.0 * t + rng.random_range(-0.1..0.1), -t + rng.random_range(-0.1..0.1)]
            })
            .collect();
        let pc = principal_component(&rows).unwrap();
        let n = rows.len() as f64;
        let (mx, my) = (rows.iter().map(|r| r[0]).sum::<f64>() / n, rows.iter().map(|r| r[1]).sum::<f64>() / n);
        let a = rows.iter().map(|r| (r[0] - mx).powi(2)).sum::<f64>() / n;
        let c = rows.iter().map(|r| (r[1] - my).powi(2)).sum::<f64>() / n;
        let b = rows.iter().map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>() / n;
        let lambda = (a + c) / 2.0 + (((a - c) / 2.0).powi(2) + b * b).sqrt();
        let (vx, vy) = (b, lambda - a);
        let norm = (vx * vx + vy * vy).sqrt();
        let mut expected = [vx / norm, vy / norm];
        if expected[0].abs() < expected[1].abs() && expected[1] < 0.0
            || expected[0].abs() >= expected[1].abs() && expected[0] < 0.0
        {
            expected = [-expected[0], -expected[1]];
        }
        assert!((pc[0] - expected[0]).abs() < 1e-9 && (pc[1] - expected[1]).abs() < 1e-9, "{pc:?} vs {expected:?}");
    }

    #[test]
    fn pca_one_feature_and_degenerate_cases() {
        assert_eq!(principal_component(&[vec![1.0], vec![3.0], vec![-2.0]]).unwrap(), vec![1.0]);
        assert!(matches!(principal_component(&[vec![1.0, 2.0], vec![1.0, 2.0]]), Err(Error::DegenerateDirection(_))));
        assert!(matches!(principal_component(&[vec![1.0]]), Err(Error::DegenerateDirection(_))));
    }

    #[test]
    fn perturbation_level_zero_is_clean_output() {
        let m = model(partition(), 5, crate::superman::Ablation::None);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<GraphSet> = (0..10).map(|i| sample(&mut rng, i)).collect();
        let curve = pca_perturbation_curve(&m, &data, 0, &[0.0, 0.5, 1.0]).unwrap();
        let clean: Vec<f64> = data.iter().map(|s| m.predict_proba(s).unwrap()).collect();
        assert_eq!(curve.outputs[0], mean_std(&clean).0);
        assert_eq!(curve.outputs.len(), 3);
    }

    #[test]
    fn first_order_shift_with_identity_psi() {
        // psi = identity and rho frozen: shifting every feature by delta moves
        // the subset contribution by sum_j sum_{w in V'(j)} rho(delta(w,j)) * sum(delta).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = graph(&mut rng, "a", 4);
        let mut enc_rng = ChaCha8Rng::seed_from_u64(2);
        let arch = Architecture { hidden: 5, layers: 2, activation: Activation::Tanh, dropout: 0.0 };
        let enc = ExtGnanParams::new(
            FeatureGrouping::joint(2),
            DeltaMode::Masked,
            EncoderAblation::PsiIdentity,
            &arch,
            &mut enc_rng,
        )
        .unwrap();
        let m = SupermanModel::from_modules(
            SubsetPartition::from_slices(&[&["a"]]).unwrap(),
            vec![SubsetModule { name: "a".into(), encoder: enc.clone(), mixer: None }],
            Link::Sigmoid,
            0.0,
            true,
        )
        .unwrap();
        let shift = [0.01, -0.02];
        let mut moved = g.clone();
        for row in moved.features_mut() {
            row[0] += shift[0];
            row[1] += shift[1];
        }
        let before = subset_contribution(&m, &GraphSet::new("e", 0, vec![g.clone()]), 0).unwrap();
        let after = subset_contribution(&m, &GraphSet::new("e", 0, vec![moved]), 0).unwrap();
        let mut weight = 0.0;
        for j in 0..4 {
            for w in 0..4 {
                if g.reach_mask()[w][j] {
                    weight += enc.rho_at(&[g.delta()[w][j]]).unwrap()[0];
                }
            }
        }
        let predicted = weight * (shift[0] + shift[1]);
        assert!(((after - before) - predicted).abs() < 1e-6);
    }

    #[test]
    fn zero_noise_changes_nothing() {
        let m = model(partition(), 9, crate::superman::Ablation::None);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut data: Vec<GraphSet> = (0..30).map(|i| sample(&mut rng, i)).collect();
        data[0].label = 0;
        data[1].label = 1;
        for kind in [NoiseKind::Additive, NoiseKind::Multiplicative, NoiseKind::Temporal] {
            let t = noise_robustness(&m, &data, &NoiseSpec { kind, levels: vec![0.0, 1.0] }, &[1, 2, 3], None).unwrap();
            assert_eq!(t.rows[0].delta_auroc_pct, 0.0);
            assert_eq!(t.rows[0].delta_auprc_pct, 0.0);
            assert_eq!(t.rows[0].delta_auroc_std, 0.0);
        }
    }

    #[test]
    fn rho_one_model_ignores_temporal_noise() {
        let m = model(partition(), 9, crate::superman::Ablation::Rho1);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut data: Vec<GraphSet> = (0..30).map(|i| sample(&mut rng, i)).collect();
        data[0].label = 0;
        data[1].label = 1;
        let spec = NoiseSpec { kind: NoiseKind::Temporal, levels: vec![0.5, 5.0] };
        let t = noise_robustness(&m, &data, &spec, &[1, 2], None).unwrap();
        assert!(t.rows.iter().all(|r| r.delta_auroc_pct == 0.0 && r.delta_auprc_pct == 0.0));
    }

    #[test]
    fn csv_exports_have_headers() {
        let m = model(partition(), 1, crate::superman::Ablation::None);
        let s = sample(&mut ChaCha8Rng::seed_from_u64(3), 0);
        let csv = contributions_csv(&[explain(&m, &s).unwrap()]).unwrap();
        assert!(csv.starts_with("entity,subset,graph,node_index,timestamp,contribution\n"));
        assert_eq!(csv.lines().count(), 1 + 3 + 1);
    }
}
