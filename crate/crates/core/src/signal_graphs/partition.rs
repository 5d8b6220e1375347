use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::{DeltaPolicy, SignalGraph};
use crate::error::{Error, Result};

/// Disjoint, covering partition of feature indices `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct FeatureGrouping {
    groups: Vec<Vec<usize>>,
    width: usize,
}

impl FeatureGrouping {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let width = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; width];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidConfig("feature groups must be nonempty".into()));
            }
            for &i in g {
                if i >= width || seen[i] {
                    return Err(Error::InvalidConfig(format!(
                        "feature groups {groups:?} are not a partition of 0..{width}"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(Self { groups, width })
    }

    /// One group holding every feature.
    pub fn joint(width: usize) -> Self {
        Self { groups: vec![(0..width).collect()], width }
    }

    /// Every feature in its own group.
    pub fn singletons(width: usize) -> Self {
        Self { groups: (0..width).map(|i| vec![i]).collect(), width }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_univariate(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }
}

impl TryFrom<Vec<Vec<usize>>> for FeatureGrouping {
    type Error = Error;
    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(groups)
    }
}

impl From<FeatureGrouping> for Vec<Vec<usize>> {
    fn from(g: FeatureGrouping) -> Self {
        g.groups
    }
}

/// Graphs of undeclared signal types with at most `max_nodes` nodes bind to
/// the collector subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collector {
    pub subset: usize,
    pub max_nodes: usize,
}

/// Disjoint grouping of signal types into subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPartition {
    subsets: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collector: Option<Collector>,
}

impl SubsetPartition {
    pub fn new(subsets: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &subsets {
            if s.is_empty() {
                return Err(Error::Partition("empty subset".into()));
            }
            for name in s {
                if !seen.insert(name.clone()) {
                    return Err(Error::Partition(format!("signal `{name}` appears in more than one subset")));
                }
            }
        }
        Ok(Self { subsets, collector: None })
    }

    pub fn from_slices(subsets: &[&[&str]]) -> Result<Self> {
        Self::new(subsets.iter().map(|s| s.iter().map(|x| x.to_string()).collect()).collect())
    }

    /// Every signal in its own subset.
    pub fn singletons<S: AsRef<str>>(signals: &[S]) -> Result<Self> {
        Self::new(signals.iter().map(|s| vec![s.as_ref().to_string()]).collect())
    }

    pub fn with_collector(mut self, collector: Collector) -> Result<Self> {
        if collector.subset >= self.subsets.len() {
            return Err(Error::Partition("collector subset index out of range".into()));
        }
        self.collector = Some(collector);
        Ok(self)
    }

    pub fn subsets(&self) -> &[Vec<String>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn collector(&self) -> Option<Collector> {
        self.collector
    }

    pub fn subset_name(&self, i: usize) -> String {
        self.subsets[i].join("+")
    }

    /// True when subset `i` can hold more than one graph and therefore mixes
    /// graphs through a set encoder.
    pub fn is_multi(&self, i: usize) -> bool {
        self.subsets[i].len() > 1 || self.collector.is_some_and(|c| c.subset == i)
    }

    pub fn subset_of(&self, signal_type: &str) -> Option<usize> {
        self.subsets.iter().position(|s| s.iter().any(|m| m == signal_type))
    }

    /// Maps each graph to its subset. Returns graph indices per subset in
    /// sample order.
    pub fn bind(&self, graphs: &[SignalGraph]) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); self.subsets.len()];
        let mut seen = BTreeSet::new();
        for (gi, g) in graphs.iter().enumerate() {
            match self.subset_of(g.signal_type()) {
                Some(s) => {
                    if !seen.insert(g.signal_type()) {
                        return Err(Error::Schema(format!("signal `{}` appears twice in one sample", g.signal_type())));
                    }
                    out[s].push(gi);
                }
                None => match self.collector {
                    Some(c) if g.len() <= c.max_nodes => out[c.subset].push(gi),
                    _ => {
                        return Err(Error::Schema(format!("signal `{}` is not part of the partition", g.signal_type())))
                    }
                },
            }
        }
        Ok(out)
    }
}

/// A labelled sample: all signal graphs of one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    pub entity_id: String,
    pub label: u8,
    pub graphs: Vec<SignalGraph>,
}

impl GraphSet {
    pub fn new(entity_id: &str, label: u8, graphs: Vec<SignalGraph>) -> Self {
        Self { entity_id: entity_id.to_string(), label, graphs }
    }

    pub fn graph(&self, signal_type: &str) -> Option<&SignalGraph> {
        self.graphs.iter().find(|g| g.signal_type() == signal_type)
    }

    pub fn node_count(&self) -> usize {
        self.graphs.iter().map(SignalGraph::len).sum()
    }
}

/// Outcome of [`validate_partition`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionReport {
    pub subsets: usize,
    pub signals: usize,
    /// Feature width shared by the members of each subset.
    pub widths: Vec<usize>,
}

/// Checks that `partition` is a disjoint cover of `vocabulary` and that the
/// members of every subset share one feature grouping.
pub fn validate_partition(
    partition: &SubsetPartition,
    groupings: &BTreeMap<String, FeatureGrouping>,
    vocabulary: &[String],
) -> Result<PartitionReport> {
    let vocab: BTreeSet<&str> = vocabulary.iter().map(String::as_str).collect();
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in partition.subsets().iter().enumerate() {
        for m in s {
            if !vocab.contains(m.as_str()) {
                return Err(Error::Partition(format!("signal `{m}` is not in the vocabulary")));
            }
            if owner.insert(m.as_str(), i).is_some() {
                return Err(Error::Partition(format!("signal `{m}` appears in more than one subset")));
            }
        }
    }
    if let Some(missing) = vocabulary.iter().find(|v| !owner.contains_key(v.as_str())) {
        if partition.collector().is_none() {
            return Err(Error::Partition(format!("signal `{missing}` is not covered by any subset")));
        }
    }
    let mut widths = Vec::with_capacity(partition.len());
    for s in partition.subsets() {
        let mut shared: Option<&FeatureGrouping> = None;
        for m in s {
            let g =
                groupings.get(m).ok_or_else(|| Error::Partition(format!("signal `{m}` has no feature grouping")))?;
            match shared {
                None => shared = Some(g),
                Some(prev) if prev == g => {}
                Some(prev) => {
                    return Err(Error::Partition(format!(
                        "signal `{m}` has grouping {:?} (width {}) but its subset uses {:?} (width {})",
                        g.groups(),
                        g.width(),
                        prev.groups(),
                        prev.width()
                    )))
                }
            }
        }
        widths.push(shared.map_or(0, FeatureGrouping::width));
    }
    Ok(PartitionReport { subsets: partition.len(), signals: owner.len(), widths })
}

/// File layout for grouping and partition configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub subsets: Vec<Vec<String>>,
    #[serde(default)]
    pub feature_groups: BTreeMap<String, Vec<Vec<usize>>>,
    #[serde(default = "default_policy")]
    pub delta_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collector: Option<Collector>,
}

fn default_policy() -> String {
    "full".into()
}

impl GroupingConfig {
    pub fn partition(&self) -> Result<SubsetPartition> {
        let p = SubsetPartition::new(self.subsets.clone())?;
        match self.collector {
            Some(c) => p.with_collector(c),
            None => Ok(p),
        }
    }

    pub fn policy(&self) -> Result<DeltaPolicy> {
        let p = match self.delta_policy.as_str() {
            "full" => DeltaPolicy::Full,
            "adjacent_only" => DeltaPolicy::AdjacentOnly,
            "window" => DeltaPolicy::Window(
                self.window.ok_or_else(|| Error::InvalidConfig("window policy needs `window`".into()))?,
            ),
            other => return Err(Error::InvalidConfig(format!("unknown delta policy `{other}`"))),
        };
        p.validate()?;
        Ok(p)
    }

    /// Explicit groupings, falling back to one joint group of width
    /// `widths[signal]` for signals without an entry.
    pub fn groupings(&self, widths: &BTreeMap<String, usize>) -> Result<BTreeMap<String, FeatureGrouping>> {
        let mut out = BTreeMap::new();
        for (signal, &w) in widths {
            let g = match self.feature_groups.get(signal) {
                Some(groups) => FeatureGrouping::new(groups.clone())?,
                None => FeatureGrouping::joint(w),
            };
            if g.width() != w {
                return Err(Error::Partition(format!(
                    "signal `{signal}` has {w} features but its grouping covers {}",
                    g.width()
                )));
            }
            out.insert(signal.clone(), g);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CD_SUBSETS: &[&[&str]] = &[
        &["Leukocytes", "Neutrophils", "Lymphocytes", "Monocytes", "Eosinophils", "Basophils"],
        &["CRP", "F-Cal"],
        &["Platelets"],
        &["Hemoglobin"],
        &["Iron"],
        &["Folate", "B12", "VitD"],
        &["ALAT", "Bilirubin", "Albumin"],
    ];

    fn vocab() -> Vec<String> {
        CD_SUBSETS.iter().flat_map(|s| s.iter().map(|x| x.to_string())).collect()
    }

    fn univariate(v: &[String]) -> BTreeMap<String, FeatureGrouping> {
        v.iter().map(|s| (s.clone(), FeatureGrouping::joint(1))).collect()
    }

    #[test]
    fn seventeen_biomarkers_in_seven_subsets() {
        let v = vocab();
        assert_eq!(v.len(), 17);
        let p = SubsetPartition::from_slices(CD_SUBSETS).unwrap();
        let r = validate_partition(&p, &univariate(&v), &v).unwrap();
        assert_eq!(r.subsets, 7);
        assert_eq!(r.signals, 17);
    }

    #[test]
    fn overlapping_subsets_are_rejected() {
        assert!(matches!(SubsetPartition::from_slices(&[&["CRP", "Iron"], &["Iron"]]), Err(Error::Partition(_))));
    }

    #[test]
    fn omitted_signal_is_named() {
        let v = vocab();
        let p = SubsetPartition::from_slices(&CD_SUBSETS[..6]).unwrap();
        let err = validate_partition(&p, &univariate(&v), &v).unwrap_err();
        assert!(err.to_string().contains("ALAT"), "{err}");
    }

    #[test]
    fn mixed_widths_in_one_subset_are_rejected() {
        let v: Vec<String> = vec!["a".into(), "b".into()];
        let mut g = univariate(&v);
        g.insert("b".into(), FeatureGrouping::joint(3));
        let p = SubsetPartition::from_slices(&[&["a", "b"]]).unwrap();
        let err = validate_partition(&p, &g, &v).unwrap_err();
        assert!(matches!(err, Error::Partition(ref m) if m.contains("`b`")));
    }

    #[test]
    fn feature_grouping_must_partition() {
        assert!(FeatureGrouping::new(vec![vec![0], vec![1, 2]]).is_ok());
        assert!(FeatureGrouping::new(vec![vec![0], vec![0, 1]]).is_err());
        assert!(FeatureGrouping::new(vec![vec![0], vec![2]]).is_err());
        assert!(FeatureGrouping::new(vec![vec![]]).is_err());
    }

    #[test]
    fn collector_absorbs_small_unknown_graphs() {
        let p = SubsetPartition::from_slices(&[&["root"], &["leaf"]])
            .unwrap()
            .with_collector(Collector { subset: 1, max_nodes: 1 })
            .unwrap();
        let big = SignalGraph::from_parts("root", vec![0.0, 1.0], vec![vec![1.0]; 2], vec![(0, 1)], true).unwrap();
        let small = |name: &str| SignalGraph::from_parts(name, vec![0.0], vec![vec![1.0]], vec![], true).unwrap();
        let b = p.bind(&[big.clone(), small("u1"), small("u2")]).unwrap();
        assert_eq!(b, vec![vec![0], vec![1, 2]]);
        assert!(p.is_multi(1));
        let two_nodes = SignalGraph::from_parts("u3", vec![0.0, 1.0], vec![vec![1.0]; 2], vec![], true).unwrap();
        assert!(matches!(p.bind(&[two_nodes]), Err(Error::Schema(_))));
    }

    #[test]
    fn grouping_config_parses_policy_and_groups() {
        let json = r#"{"subsets": [["CRP","F-Cal"]], "feature_groups": {"CRP": [[0],[1,2]]},
                       "delta_policy": "window", "window": 2}"#;
        let c: GroupingConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.policy().unwrap(), DeltaPolicy::Window(2));
        let widths = BTreeMap::from([("CRP".to_string(), 3), ("F-Cal".to_string(), 1)]);
        let g = c.groupings(&widths).unwrap();
        assert_eq!(g["CRP"].groups(), &[vec![0], vec![1, 2]]);
        assert_eq!(g["F-Cal"], FeatureGrouping::joint(1));
        let bad: GroupingConfig =
            serde_json::from_str(r#"{"subsets": [["a"]], "delta_policy": "window", "window": 0}"#).unwrap();
        assert!(matches!(bad.policy(), Err(Error::InvalidConfig(_))));
    }
}
