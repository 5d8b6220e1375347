//! Four-point tree-metric verification and path reconstruction from a
//! distance matrix.

use std::cell::Cell;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_graphs::SignalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Tolerance {
    Absolute(f64),
    /// Scaled by `max(1, |a|, |b|)`.
    Relative(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Absolute(1e-9)
    }
}

impl Tolerance {
    /// Default for float data read from files.
    pub const INGESTED: Tolerance = Tolerance::Relative(1e-6);

    pub fn close(self, a: f64, b: f64) -> bool {
        match self {
            Tolerance::Absolute(t) => (a - b).abs() <= t,
            Tolerance::Relative(t) => (a - b).abs() <= t * 1f64.max(a.abs()).max(b.abs()),
        }
    }
}

/// Symmetric, nonnegative, zero-diagonal matrix. Reads through [`get`]
/// are counted.
///
/// [`get`]: DistanceMatrix::get
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    labels: Option<Vec<String>>,
    reads: Cell<u64>,
}

impl PartialEq for DistanceMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.values == other.values && self.labels == other.labels
    }
}

impl DistanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>, tol: Tolerance) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidMetric(format!("row {r} has {} entries, expected {n}", rows[r].len())));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        for i in 0..n {
            if !tol.close(values[i * n + i], 0.0) {
                return Err(Error::InvalidMetric(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 && !tol.close(v, 0.0) {
                    return Err(Error::InvalidMetric(format!("entry ({i}, {j}) = {v} is not a nonnegative number")));
                }
                if !tol.close(v, values[j * n + i]) {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (ij, ik, kj) = (values[i * n + j], values[i * n + k], values[k * n + j]);
                    if ij > ik + kj && !tol.close(ij, ik + kj) {
                        return Err(Error::InvalidMetric(format!("triangle inequality fails for ({i}, {k}, {j})")));
                    }
                }
            }
        }
        Ok(Self { n, values, labels: None, reads: Cell::new(0) })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidMetric(format!("{} labels for {} vertices", labels.len(), self.n)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Temporal distances `|delta|` between the nodes of a graph, symmetrised.
    pub fn from_graph(graph: &SignalGraph) -> Result<Self> {
        let n = graph.len();
        let d = graph.delta();
        let rows = (0..n).map(|i| (0..n).map(|j| d[i][j].abs().max(d[j][i].abs())).collect()).collect();
        Self::new(rows, Tolerance::INGESTED)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.reads.set(self.reads.get() + 1);
        self.values[i * self.n + j]
    }

    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    pub fn reset_reads(&self) {
        self.reads.set(0);
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n.max(1)).take(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Headerless square CSV, or one header row of vertex labels.
    pub fn read_csv<R: Read>(reader: R, tol: Tolerance) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        let mut labels = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if line == 0 => labels = Some(rec.iter().map(str::to_string).collect()),
                Err(e) => return Err(Error::Parse { line: line as u64 + 1, message: e.to_string() }),
            }
        }
        let m = Self::new(rows, tol)?;
        match labels {
            Some(l) => m.with_labels(l),
            None => Ok(m),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if let Some(l) = &self.labels {
            w.write_record(l)?;
        }
        for r in self.rows() {
            w.write_record(r.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourPointResult {
    pub holds: bool,
    pub violation: Option<[usize; 4]>,
}

/// Exhaustive scan: for every quadruple the two largest of the three pair
/// sums must agree.
pub fn four_point_check(d: &DistanceMatrix, tol: Tolerance) -> FourPointResult {
    let n = d.len();
    let v = &d.values;
    let at = |i: usize, j: usize| v[i * n + j];
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let mut s = [at(i, j) + at(k, l), at(i, k) + at(j, l), at(i, l) + at(j, k)];
                    s.sort_by(f64::total_cmp);
                    if !tol.close(s[1], s[2]) {
                        return FourPointResult { holds: false, violation: Some([i, j, k, l]) };
                    }
                }
            }
        }
    }
    FourPointResult { holds: true, violation: None }
}

/// Vertex order and the positive weights between consecutive vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub order: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl WeightedPath {
    pub fn new(order: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if order.len() != weights.len() + 1 && !(order.is_empty() && weights.is_empty()) {
            return Err(Error::InvalidShape(format!(
                "{} vertices need {} weights",
                order.len(),
                order.len().saturating_sub(1)
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::DegenerateWeights(format!("weight {w} is not positive")));
        }
        Ok(Self { order, weights, labels: None })
    }

    /// Path metric: distance is the sum of weights between two positions.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.order.len();
        let mut pos = vec![0.0; n];
        for (k, w) in self.weights.iter().enumerate() {
            pos[k + 1] = pos[k] + w;
        }
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                values[self.order[a] * n + self.order[b]] = (pos[a] - pos[b]).abs();
            }
        }
        DistanceMatrix { n, values, labels: self.labels.clone(), reads: Cell::new(0) }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Recovers the unique (up to reversal) weighted path realising `d`.
///
/// Uses `2n^2 + n` distance reads: one sweep to find the endpoint, one row
/// to order the vertices, one sweep to verify.
pub fn reconstruct_path(d: &DistanceMatrix, tol: Tolerance) -> Result<WeightedPath> {
    let n = d.len();
    if n == 0 {
        return Ok(WeightedPath { order: Vec::new(), weights: Vec::new(), labels: None });
    }
    let mut s = 0;
    let mut best = f64::NEG_INFINITY;
    for v in 0..n {
        for u in 0..n {
            let x = d.get(v, u);
            if x > best {
                best = x;
                s = v;
            }
        }
    }
    let from_s: Vec<f64> = (0..n).map(|v| d.get(s, v)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| from_s[a].total_cmp(&from_s[b]));
    for a in 0..n {
        for b in a + 1..n {
            let expected = from_s[order[b]] - from_s[order[a]];
            if !tol.close(d.get(order[a], order[b]), expected) {
                return Err(Error::NotAPathMetric(format!(
                    "distance between {} and {} is not the sum of the edges between them",
                    order[a], order[b]
                )));
            }
        }
    }
    let weights: Vec<f64> = order.windows(2).map(|w| from_s[w[1]] - from_s[w[0]]).collect();
    if let Some(k) = weights.iter().position(|&w| tol.close(w, 0.0)) {
        return Err(Error::DegenerateWeights(format!(
            "vertices {} and {} are at the same distance from the endpoint",
            order[k],
            order[k + 1]
        )));
    }
    let labels = d.labels().map(|l| order.iter().map(|&i| l[i].clone()).collect());
    Ok(WeightedPath { order, weights, labels })
}
