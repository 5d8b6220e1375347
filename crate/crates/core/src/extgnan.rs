//! Graph encoder that sums distance-weighted feature-group shape functions.
//!
//! For node `j` and feature group `F_l`:
//!
//! ```text
//! [h_j]_{F_l} = sum_{w in V'} rho(delta(w, j)) * psi_l(x_w[F_l])
//! h_G         = sum_j h_j
//! ```
//!
//! `V'` is the set of nodes that reach `j` (masked mode) or every node
//! (literal mode). Node representations are laid out group by group, so
//! entry positions follow the declared group order.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::diffcore::{reborrow, Activation, GradTape, Mlp, Parameters, Tensor, Var};
use crate::error::{Error, Result};
use crate::signal_graphs::{FeatureGrouping, SignalGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Only pairs with a directed path contribute; the diagonal is kept.
    #[default]
    Masked,
    /// Every ordered pair contributes with `t_w - t_j`.
    Literal,
}

/// Component switches for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderAblation {
    #[default]
    None,
    /// `rho` replaced by the constant 1.
    RhoConstOne,
    /// `psi` replaced by the identity map.
    PsiIdentity,
    /// Shape functions applied per node with no cross-node sum.
    NodeMlp,
    /// Univariate shape functions only; requires singleton groups.
    GnanUnivariate,
}

/// Width, depth and regularisation shared by every sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    /// Number of linear layers per network.
    pub layers: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: 32, layers: 3, activation: Activation::Relu, dropout: 0.1 }
    }
}

/// One subset's encoder: a distance network and one shape network per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtGnanParams {
    rho: Mlp,
    psi: Vec<Mlp>,
    grouping: FeatureGrouping,
    delta_mode: DeltaMode,
    ablation: EncoderAblation,
    /// `rho` reads `delta / time_scale`.
    time_scale: f64,
}

/// Tape handles produced while encoding one graph.
#[derive(Debug, Clone)]
pub struct GraphEncoding {
    /// `n x n` pair weights, `weights[j][w] = rho(delta(w, j))`. `None` for
    /// the node-wise ablation, which behaves like the identity.
    pub weights: Option<Var>,
    /// Shape-function outputs per group, each `n x |F_l|`.
    pub psi: Vec<Var>,
    /// `n x d` node representations; `None` for an empty graph.
    pub nodes: Option<Var>,
    /// `1 x d` graph representation.
    pub graph: Var,
}

/// `[h_j]` in concatenated group-block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRepresentation {
    pub values: Vec<f64>,
}

impl ExtGnanParams {
    pub fn new(
        grouping: FeatureGrouping,
        delta_mode: DeltaMode,
        ablation: EncoderAblation,
        arch: &Architecture,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let rho = Mlp::with_hidden(1, arch.hidden, arch.layers, 1, arch.activation, arch.dropout, rng)?;
        let psi = grouping
            .groups()
            .iter()
            .map(|g| Mlp::with_hidden(g.len(), arch.hidden, arch.layers, g.len(), arch.activation, arch.dropout, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(rho, psi, grouping, delta_mode, ablation)
    }

    pub fn from_parts(
        rho: Mlp,
        psi: Vec<Mlp>,
        grouping: FeatureGrouping,
        delta_mode: DeltaMode,
        ablation: EncoderAblation,
    ) -> Result<Self> {
        if rho.input_dim() != 1 || rho.output_dim() != 1 {
            return Err(Error::InvalidShape("rho must map R -> R".into()));
        }
        if psi.len() != grouping.groups().len() {
            return Err(Error::InvalidShape(format!(
                "{} shape networks for {} feature groups",
                psi.len(),
                grouping.groups().len()
            )));
        }
        for (net, g) in psi.iter().zip(grouping.groups()) {
            if net.input_dim() != g.len() || net.output_dim() != g.len() {
                return Err(Error::InvalidShape(format!(
                    "shape network for group {g:?} must map R^{0} -> R^{0}",
                    g.len()
                )));
            }
        }
        if ablation == EncoderAblation::GnanUnivariate && !grouping.is_univariate() {
            return Err(Error::InvalidConfig("univariate ablation needs singleton feature groups".into()));
        }
        Ok(Self { rho, psi, grouping, delta_mode, ablation, time_scale: 1.0 })
    }

    pub fn with_time_scale(mut self, time_scale: f64) -> Result<Self> {
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("time scale {time_scale} must be positive")));
        }
        self.time_scale = time_scale;
        Ok(self)
    }

    pub fn rho(&self) -> &Mlp {
        &self.rho
    }

    pub fn psi(&self) -> &[Mlp] {
        &self.psi
    }

    pub fn grouping(&self) -> &FeatureGrouping {
        &self.grouping
    }

    pub fn width(&self) -> usize {
        self.grouping.width()
    }

    pub fn delta_mode(&self) -> DeltaMode {
        self.delta_mode
    }

    pub fn ablation(&self) -> EncoderAblation {
        self.ablation
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn tensor_count(&self) -> usize {
        self.rho.tensor_count() + self.psi.iter().map(Mlp::tensor_count).sum::<usize>()
    }

    /// Pairs `(w, j)` that contribute to node `j`, with their distance.
    pub fn pairs(&self, graph: &SignalGraph) -> Vec<(usize, usize, f64)> {
        let n = graph.len();
        let reach = graph.reach_mask();
        let delta = graph.delta();
        let ts = graph.timestamps();
        let mut out = Vec::new();
        for j in 0..n {
            for w in 0..n {
                if reach[w][j] {
                    out.push((w, j, delta[w][j]));
                } else if self.delta_mode == DeltaMode::Literal {
                    out.push((w, j, ts[w] - ts[j]));
                }
            }
        }
        out
    }

    /// Records the encoder on `tape`. `vars` are this encoder's parameters
    /// in [`Parameters::params`] order.
    pub fn encode_tape(
        &self,
        tape: &mut GradTape,
        vars: &[Var],
        graph: &SignalGraph,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<GraphEncoding> {
        if vars.len() != self.tensor_count() {
            return Err(Error::InvalidShape("encoder parameter count mismatch".into()));
        }
        let d = self.width();
        let n = graph.len();
        if n == 0 {
            let graph = tape.constant(&Tensor::zeros(&[1, d]));
            return Ok(GraphEncoding { weights: None, psi: Vec::new(), nodes: None, graph });
        }
        if graph.feature_dim() != d {
            return Err(Error::InvalidShape(format!(
                "graph `{}` has {} features, encoder expects {d}",
                graph.signal_type(),
                graph.feature_dim()
            )));
        }
        let (rho_vars, psi_vars) = vars.split_at(self.rho.tensor_count());

        let weights = match self.ablation {
            EncoderAblation::NodeMlp => None,
            EncoderAblation::RhoConstOne => {
                let mut a = vec![0.0; n * n];
                for (w, j, _) in self.pairs(graph) {
                    a[j * n + w] = 1.0;
                }
                Some(tape.constant(&Tensor::matrix(n, n, a)?))
            }
            _ => {
                let pairs = self.pairs(graph);
                let input = Tensor::column(pairs.iter().map(|p| p.2 / self.time_scale).collect());
                let x = tape.constant(&input);
                let r = self.rho.forward_tape(tape, rho_vars, x, reborrow(&mut dropout))?;
                let pos = pairs.iter().map(|&(w, j, _)| j * n + w).collect();
                Some(tape.scatter(r, pos, n, n)?)
            }
        };

        let features = Tensor::from_rows(graph.features(), d)?;
        let x = tape.constant(&features);
        let mut psi_out = Vec::with_capacity(self.psi.len());
        let mut blocks = Vec::with_capacity(self.psi.len());
        let mut offset = 0;
        for (net, group) in self.psi.iter().zip(self.grouping.groups()) {
            let k = net.tensor_count();
            let xg = tape.select_cols(x, group.clone())?;
            let out = if self.ablation == EncoderAblation::PsiIdentity {
                xg
            } else {
                net.forward_tape(tape, &psi_vars[offset..offset + k], xg, reborrow(&mut dropout))?
            };
            offset += k;
            psi_out.push(out);
            blocks.push(match weights {
                Some(a) => tape.matmul(a, out)?,
                None => out,
            });
        }
        let nodes = if blocks.len() == 1 { blocks[0] } else { tape.concat_cols(blocks)? };
        let graph_rep = tape.sum_rows(nodes);
        Ok(GraphEncoding { weights, psi: psi_out, nodes: Some(nodes), graph: graph_rep })
    }

    fn eval(&self, graph: &SignalGraph) -> Result<(GradTape, GraphEncoding)> {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect();
        let enc = self.encode_tape(&mut tape, &vars, graph, None)?;
        tape.check_finite()?;
        Ok((tape, enc))
    }

    /// `h_j` for one node.
    pub fn node_representation(&self, graph: &SignalGraph, j: usize) -> Result<NodeRepresentation> {
        if j >= graph.len() {
            return Err(Error::InvalidNode { index: j, len: graph.len() });
        }
        let (tape, enc) = self.eval(graph)?;
        let nodes = enc.nodes.expect("nonempty graph");
        let d = self.width();
        Ok(NodeRepresentation { values: tape.value(nodes)[j * d..(j + 1) * d].to_vec() })
    }

    /// `h_G = sum_j h_j`; the zero vector for an empty graph.
    pub fn graph_representation(&self, graph: &SignalGraph) -> Result<Vec<f64>> {
        let (tape, enc) = self.eval(graph)?;
        Ok(tape.value(enc.graph).to_vec())
    }

    /// `term[w][j] = rho(delta(w, j)) * sum_l sum(psi_l(x_w[F_l]))`, zero
    /// for pairs outside `V'`.
    pub fn node_contribution_terms(&self, graph: &SignalGraph) -> Result<Vec<Vec<f64>>> {
        let n = graph.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let (tape, enc) = self.eval(graph)?;
        let psi_sums: Vec<f64> = (0..n)
            .map(|w| {
                enc.psi
                    .iter()
                    .map(|&p| {
                        let c = tape.shape(p).1;
                        tape.value(p)[w * c..(w + 1) * c].iter().sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        let mut terms = vec![vec![0.0; n]; n];
        match enc.weights {
            Some(a) => {
                let av = tape.value(a);
                for (w, row) in terms.iter_mut().enumerate() {
                    for (j, t) in row.iter_mut().enumerate() {
                        *t = av[j * n + w] * psi_sums[w];
                    }
                }
            }
            None => {
                for (w, row) in terms.iter_mut().enumerate() {
                    row[w] = psi_sums[w];
                }
            }
        }
        Ok(terms)
    }

    /// `rho` evaluated on raw distances (before the time-scale division).
    pub fn rho_at(&self, deltas: &[f64]) -> Result<Vec<f64>> {
        if self.ablation == EncoderAblation::RhoConstOne {
            return Ok(vec![1.0; deltas.len()]);
        }
        let x = Tensor::column(deltas.iter().map(|d| d / self.time_scale).collect());
        Ok(self.rho.forward(&x, None)?.into_values())
    }
}

impl Parameters for ExtGnanParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut out = self.rho.params();
        for p in &self.psi {
            out.extend(p.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.rho.params_mut();
        for p in &mut self.psi {
            out.extend(p.params_mut());
        }
        out
    }
}
