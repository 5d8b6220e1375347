use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One time-stamped measurement of one signal for one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub entity_id: String,
    pub signal_type: String,
    pub timestamp: f64,
    /// Feature 0 is the observed value by convention.
    pub features: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(entity_id: &str, signal_type: &str, timestamp: f64, features: Vec<f64>) -> Self {
        Self { entity_id: entity_id.to_string(), signal_type: signal_type.to_string(), timestamp, features }
    }
}

/// Edge orientation for path graphs built from measurement sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `i -> i+1` in time order; node `j` is reached from every earlier node.
    #[default]
    EarlierToLater,
    /// `i+1 -> i`; node `j` is reached from every later node.
    LaterToEarlier,
    /// Consecutive nodes joined in both directions.
    Undirected,
}

/// Sparsity pattern applied on top of path reachability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPolicy {
    #[default]
    Full,
    /// Only pairs joined by a single edge, plus the diagonal.
    AdjacentOnly,
    /// Pairs at most `w` hops apart along the edge direction, plus the diagonal.
    Window(usize),
}

impl DeltaPolicy {
    fn max_hops(self) -> Result<Option<usize>> {
        match self {
            DeltaPolicy::Full => Ok(None),
            DeltaPolicy::AdjacentOnly => Ok(Some(1)),
            DeltaPolicy::Window(0) => Err(Error::InvalidConfig("window must be at least 1".into())),
            DeltaPolicy::Window(w) => Ok(Some(w)),
        }
    }

    pub fn validate(self) -> Result<()> {
        self.max_hops().map(|_| ())
    }
}

/// Measurements of one signal type as a graph with pairwise signed
/// temporal distances gated by directed reachability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct SignalGraph {
    signal_type: String,
    feature_dim: usize,
    features: Vec<Vec<f64>>,
    timestamps: Vec<f64>,
    edges: Vec<(usize, usize)>,
    directed: bool,
    policy: DeltaPolicy,
    hops: Vec<Vec<Option<usize>>>,
    delta: Vec<Vec<f64>>,
    reach: Vec<Vec<bool>>,
}

impl SignalGraph {
    /// Builds a graph from explicit nodes and edges. Reachability is the
    /// transitive closure of `edges` plus the diagonal.
    pub fn from_parts(
        signal_type: &str,
        timestamps: Vec<f64>,
        features: Vec<Vec<f64>>,
        edges: Vec<(usize, usize)>,
        directed: bool,
    ) -> Result<Self> {
        let n = timestamps.len();
        if features.len() != n {
            return Err(Error::InvalidShape(format!(
                "{signal_type}: {n} timestamps but {} feature rows",
                features.len()
            )));
        }
        let feature_dim = features.first().map_or(0, Vec::len);
        if n > 0 && feature_dim == 0 {
            return Err(Error::InvalidShape(format!("{signal_type}: nodes need at least one feature")));
        }
        if features.iter().any(|f| f.len() != feature_dim) {
            return Err(Error::InvalidShape(format!("{signal_type}: ragged feature rows")));
        }
        if timestamps.iter().any(|t| !t.is_finite()) || features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{signal_type}: non-finite measurement")));
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::InvalidShape(format!("{signal_type}: edge ({a},{b}) out of range")));
        }
        let hops = hop_distances(n, &edges, directed);
        let mut g = Self {
            signal_type: signal_type.to_string(),
            feature_dim,
            features,
            timestamps,
            edges,
            directed,
            policy: DeltaPolicy::Full,
            hops,
            delta: Vec::new(),
            reach: Vec::new(),
        };
        g.recompute()?;
        Ok(g)
    }

    /// Zero-node placeholder with a declared feature width.
    pub fn empty(signal_type: &str, feature_dim: usize) -> Self {
        Self {
            signal_type: signal_type.to_string(),
            feature_dim,
            features: Vec::new(),
            timestamps: Vec::new(),
            edges: Vec::new(),
            directed: true,
            policy: DeltaPolicy::Full,
            hops: Vec::new(),
            delta: Vec::new(),
            reach: Vec::new(),
        }
    }

    fn recompute(&mut self) -> Result<()> {
        let n = self.timestamps.len();
        let limit = self.policy.max_hops()?;
        self.reach = (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| match (self.hops[u][v], limit) {
                        (None, _) => false,
                        (Some(_), None) => true,
                        (Some(h), Some(w)) => h <= w,
                    })
                    .collect()
            })
            .collect();
        self.delta = (0..n)
            .map(|u| {
                (0..n).map(|v| if self.reach[u][v] { self.timestamps[u] - self.timestamps[v] } else { 0.0 }).collect()
            })
            .collect();
        Ok(())
    }

    /// Applies a sparsity pattern to the pairwise distances.
    pub fn mask_delta(&self, policy: DeltaPolicy) -> Result<Self> {
        policy.validate()?;
        let mut g = self.clone();
        g.policy = policy;
        g.recompute()?;
        Ok(g)
    }

    pub fn signal_type(&self) -> &str {
        &self.signal_type
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Mutable node features; timestamps and distances are unaffected.
    pub fn features_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.features
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn policy(&self) -> DeltaPolicy {
        self.policy
    }

    pub fn delta(&self) -> &[Vec<f64>] {
        &self.delta
    }

    pub fn reach_mask(&self) -> &[Vec<bool>] {
        &self.reach
    }

    /// Replaces timestamps and recomputes the distance matrix.
    pub fn set_timestamps(&mut self, timestamps: Vec<f64>) -> Result<()> {
        if timestamps.len() != self.len() {
            return Err(Error::InvalidShape("timestamp count changed".into()));
        }
        self.timestamps = timestamps;
        self.recompute()
    }

    /// Perturbs off-diagonal reachable distances. One draw per unordered pair
    /// is added to `delta[u][v]` and subtracted from `delta[v][u]`.
    pub fn add_delta_noise(&mut self, mut draw: impl FnMut() -> f64) {
        let n = self.len();
        for u in 0..n {
            for v in (u + 1)..n {
                if !(self.reach[u][v] || self.reach[v][u]) {
                    continue;
                }
                let e = draw();
                if self.reach[u][v] {
                    self.delta[u][v] += e;
                }
                if self.reach[v][u] {
                    self.delta[v][u] -= e;
                }
            }
        }
    }

    pub fn true_mask_count(&self) -> usize {
        self.reach.iter().flatten().filter(|&&b| b).count()
    }
}

fn hop_distances(n: usize, edges: &[(usize, usize)], directed: bool) -> Vec<Vec<Option<usize>>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        if !directed {
            adj[b].push(a);
        }
    }
    (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u].expect("visited");
                for &v in &adj[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Orders one signal's records in time and chains them into a path.
/// Ties keep their input order.
pub fn build_path_graph(records: &[MeasurementRecord], direction: Direction) -> Result<SignalGraph> {
    let Some(first) = records.first() else {
        return Err(Error::EmptySignal("<unnamed>".into()));
    };
    let signal = &first.signal_type;
    if let Some(r) = records.iter().find(|r| &r.signal_type != signal) {
        return Err(Error::Schema(format!("path graph mixes signal types `{signal}` and `{}`", r.signal_type)));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].timestamp.total_cmp(&records[b].timestamp));
    let timestamps = order.iter().map(|&i| records[i].timestamp).collect();
    let features = order.iter().map(|&i| records[i].features.clone()).collect();
    let n = records.len();
    let (edges, directed) = match direction {
        Direction::EarlierToLater => ((0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(), true),
        Direction::LaterToEarlier => ((0..n.saturating_sub(1)).map(|i| (i + 1, i)).collect(), true),
        Direction::Undirected => ((0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(), false),
    };
    SignalGraph::from_parts(signal, timestamps, features, edges, directed)
}

/// Serialized graph layout: distances are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub signal_type: String,
    pub timestamps: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    /// Omitted edges mean an earlier-to-later path over the listed order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default = "default_true")]
    pub directed: bool,
    #[serde(default, skip_serializing_if = "is_full")]
    pub delta_policy: DeltaPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
}

fn default_true() -> bool {
    true
}

fn is_full(p: &DeltaPolicy) -> bool {
    *p == DeltaPolicy::Full
}

impl From<SignalGraph> for GraphJson {
    fn from(g: SignalGraph) -> Self {
        GraphJson {
            feature_dim: g.timestamps.is_empty().then_some(g.feature_dim),
            signal_type: g.signal_type,
            timestamps: g.timestamps,
            features: g.features,
            edges: Some(g.edges),
            directed: g.directed,
            delta_policy: g.policy,
        }
    }
}

impl TryFrom<GraphJson> for SignalGraph {
    type Error = Error;
    fn try_from(j: GraphJson) -> Result<Self> {
        if j.timestamps.is_empty() {
            return Ok(SignalGraph::empty(&j.signal_type, j.feature_dim.unwrap_or(0)));
        }
        let n = j.timestamps.len();
        let edges = j.edges.unwrap_or_else(|| (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect());
        let g = SignalGraph::from_parts(&j.signal_type, j.timestamps, j.features, edges, j.directed)?;
        if j.delta_policy == DeltaPolicy::Full {
            Ok(g)
        } else {
            g.mask_delta(j.delta_policy)
        }
    }
}
