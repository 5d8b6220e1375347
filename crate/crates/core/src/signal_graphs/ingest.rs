use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::{build_path_graph, Direction, MeasurementRecord};
use super::partition::GraphSet;
use crate::error::{Error, Result};

/// How to read a long-format measurement CSV.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Allowed signal types; `None` accepts anything.
    #[serde(default)]
    pub vocabulary: Option<Vec<String>>,
    /// Sidecar `entity_id,label` file used when the data has no `label` column.
    #[serde(default)]
    pub labels_path: Option<PathBuf>,
    #[serde(default)]
    pub direction: Direction,
    /// Unit of the timestamp column, carried as metadata.
    #[serde(default = "default_unit")]
    pub time_unit: String,
}

fn default_unit() -> String {
    "days".into()
}

const REQUIRED: [&str; 4] = ["entity_id", "signal_type", "timestamp", "value"];

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<GraphSet>> {
    let file = std::fs::File::open(path)?;
    let sidecar = match &schema.labels_path {
        Some(p) => Some(read_labels(std::fs::File::open(p)?)?),
        None => None,
    };
    ingest_reader(file, schema, sidecar)
}

fn parse_num(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("{what} `{field}` is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("{what} `{field}` is not finite") });
    }
    Ok(v)
}

fn parse_label(field: &str, line: u64) -> Result<u8> {
    match field.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::Parse { line, message: format!("label `{other}` is not 0 or 1") }),
    }
}

/// Reads `entity_id,label` rows.
pub fn read_labels<R: Read>(reader: R) -> Result<BTreeMap<String, u8>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers.iter().position(|h| h == "entity_id");
    let label_col = headers.iter().position(|h| h == "label");
    let (Some(id_col), Some(label_col)) = (id_col, label_col) else {
        return Err(Error::Parse { line: 1, message: "label file needs entity_id,label header".into() });
    };
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.insert(rec[id_col].to_string(), parse_label(&rec[label_col], line)?);
    }
    Ok(out)
}

/// Core of [`ingest_csv`] over any reader. Entities come out sorted by id;
/// graphs follow vocabulary order when one is given, else signal name order.
pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
    sidecar: Option<BTreeMap<String, u8>>,
) -> Result<Vec<GraphSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, want) in REQUIRED.iter().enumerate() {
        if headers.get(i) != Some(*want) {
            return Err(Error::Parse { line: 1, message: format!("expected header starting {}", REQUIRED.join(",")) });
        }
    }
    let label_col = headers.iter().position(|h| h == "label");
    if label_col.is_none() && sidecar.is_none() {
        return Err(Error::Schema("no `label` column and no label file".into()));
    }
    let extra: Vec<usize> = (4..headers.len()).filter(|&i| Some(i) != label_col).collect();
    let vocab: Option<BTreeSet<&str>> = schema.vocabulary.as_ref().map(|v| v.iter().map(String::as_str).collect());

    let mut entities: BTreeMap<String, BTreeMap<String, Vec<MeasurementRecord>>> = BTreeMap::new();
    let mut labels: BTreeMap<String, u8> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 4 {
            return Err(Error::Parse { line, message: format!("expected at least 4 fields, got {}", rec.len()) });
        }
        let entity = rec[0].to_string();
        let signal = rec[1].to_string();
        if entity.is_empty() || signal.is_empty() {
            return Err(Error::Parse { line, message: "empty entity_id or signal_type".into() });
        }
        if let Some(v) = &vocab {
            if !v.contains(signal.as_str()) {
                return Err(Error::Schema(format!("line {line}: unknown signal type `{signal}`")));
            }
        }
        let timestamp = parse_num(&rec[2], "timestamp", line)?;
        let mut features = vec![parse_num(&rec[3], "value", line)?];
        let mut ended = false;
        for &c in &extra {
            match rec.get(c).map(str::trim) {
                None | Some("") => ended = true,
                Some(f) if ended => {
                    return Err(Error::Parse { line, message: format!("feature `{f}` follows an empty cell") })
                }
                Some(f) => features.push(parse_num(f, "feature", line)?),
            }
        }
        if let Some(lc) = label_col {
            let l = parse_label(rec.get(lc).unwrap_or(""), line)?;
            if let Some(prev) = labels.insert(entity.clone(), l) {
                if prev != l {
                    return Err(Error::Parse { line, message: format!("conflicting labels for `{entity}`") });
                }
            }
        }
        entities.entry(entity.clone()).or_default().entry(signal.clone()).or_default().push(MeasurementRecord {
            entity_id: entity,
            signal_type: signal,
            timestamp,
            features,
        });
    }
    if let Some(side) = sidecar {
        labels = side;
    }

    let order = |signal: &str| -> usize {
        schema.vocabulary.as_ref().and_then(|v| v.iter().position(|s| s == signal)).unwrap_or(usize::MAX)
    };
    let mut out = Vec::with_capacity(entities.len());
    for (entity, signals) in entities {
        let label = *labels.get(&entity).ok_or_else(|| Error::Schema(format!("no label for entity `{entity}`")))?;
        let mut names: Vec<&String> = signals.keys().collect();
        names.sort_by_key(|s| (order(s), (*s).clone()));
        let mut graphs = Vec::with_capacity(names.len());
        for name in names {
            let recs = &signals[name];
            let width = recs[0].features.len();
            if recs.iter().any(|r| r.features.len() != width) {
                return Err(Error::Schema(format!("entity `{entity}` signal `{name}` has ragged features")));
            }
            graphs.push(build_path_graph(recs, schema.direction)?);
        }
        out.push(GraphSet::new(&entity, label, graphs));
    }
    Ok(out)
}

/// Writes path-graph datasets back to the long CSV layout with a label column.
pub fn write_csv<W: Write>(dataset: &[GraphSet], writer: W) -> Result<()> {
    let max_d = dataset.iter().flat_map(|s| &s.graphs).map(|g| g.feature_dim()).max().unwrap_or(1).max(1);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend((1..max_d).map(|i| format!("x{i}")));
    header.push("label".into());
    w.write_record(&header)?;
    for s in dataset {
        for g in &s.graphs {
            for (t, f) in g.timestamps().iter().zip(g.features()) {
                let mut row = vec![s.entity_id.clone(), g.signal_type().to_string(), t.to_string()];
                row.extend(f.iter().map(|v| v.to_string()));
                row.extend(std::iter::repeat_n(String::new(), max_d - f.len()));
                row.push(s.label.to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn dataset_to_json(dataset: &[GraphSet]) -> Result<String> {
    Ok(serde_json::to_string(dataset)?)
}

pub fn dataset_from_json(s: &str) -> Result<Vec<GraphSet>> {
    Ok(serde_json::from_str(s)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<GraphSet>> {
    dataset_from_json(&std::fs::read_to_string(path)?)
}

/// Entity, graph and node counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub entities: usize,
    pub graphs: usize,
    pub nodes: usize,
    pub positives: usize,
    pub graphs_per_signal: BTreeMap<String, usize>,
}

pub fn summarize(dataset: &[GraphSet]) -> DatasetSummary {
    let mut per = BTreeMap::new();
    for g in dataset.iter().flat_map(|s| &s.graphs) {
        *per.entry(g.signal_type().to_string()).or_insert(0) += 1;
    }
    DatasetSummary {
        entities: dataset.len(),
        graphs: dataset.iter().map(|s| s.graphs.len()).sum(),
        nodes: dataset.iter().map(GraphSet::node_count).sum(),
        positives: dataset.iter().filter(|s| s.label == 1).count(),
        graphs_per_signal: per,
    }
}

/// Feature widths observed per signal type.
pub fn signal_widths(dataset: &[GraphSet]) -> Result<BTreeMap<String, usize>> {
    let mut out: BTreeMap<String, usize> = BTreeMap::new();
    for g in dataset.iter().flat_map(|s| &s.graphs) {
        if g.is_empty() {
            continue;
        }
        match out.get(g.signal_type()) {
            Some(&w) if w != g.feature_dim() => {
                return Err(Error::Schema(format!(
                    "signal `{}` has widths {w} and {}",
                    g.signal_type(),
                    g.feature_dim()
                )))
            }
            _ => {
                out.insert(g.signal_type().to_string(), g.feature_dim());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "entity_id,signal_type,timestamp,value,label
p1,CRP,0,1.5,1
p1,CRP,3,2.5,1
p1,Iron,1,7,1
p1,Hb,2,13,1
p2,CRP,4,0.5,0
p2,Hb,1,12,0
p2,Hb,9,11,0
";

    #[test]
    fn counts_entities_and_graphs() {
        let ds = ingest_reader(CSV.as_bytes(), &CsvSchema::default(), None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].entity_id, "p1");
        assert_eq!(ds[0].graphs.len(), 3);
        assert_eq!(ds[1].graphs.len(), 2);
        assert_eq!(ds[1].label, 0);
        assert_eq!(ds[1].graph("Hb").unwrap().len(), 2);
    }

    #[test]
    fn five_measurements_make_one_five_node_graph() {
        let mut s = String::from("entity_id,signal_type,timestamp,value,label\n");
        for t in [4, 1, 3, 0, 2] {
            s.push_str(&format!("e,CRP,{t},{t}.5,1\n"));
        }
        let ds = ingest_reader(s.as_bytes(), &CsvSchema::default(), None).unwrap();
        assert_eq!(ds[0].graphs.len(), 1);
        assert_eq!(ds[0].graphs[0].len(), 5);
        assert_eq!(ds[0].graphs[0].timestamps(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn non_numeric_timestamp_names_the_line() {
        let s = "entity_id,signal_type,timestamp,value,label\ne,CRP,0,1,1\ne,CRP,soon,1,1\n";
        match ingest_reader(s.as_bytes(), &CsvSchema::default(), None) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("soon"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_signal_is_schema_error() {
        let schema = CsvSchema { vocabulary: Some(vec!["CRP".into(), "Hb".into()]), ..Default::default() };
        assert!(matches!(ingest_reader(CSV.as_bytes(), &schema, None), Err(Error::Schema(_))));
    }

    #[test]
    fn sidecar_labels_and_extra_features() {
        let s = "entity_id,signal_type,timestamp,value,unit_code\na,X,0,1,5\na,X,2,3,6\n";
        let labels = read_labels("entity_id,label\na,1\n".as_bytes()).unwrap();
        let ds = ingest_reader(s.as_bytes(), &CsvSchema::default(), Some(labels)).unwrap();
        assert_eq!(ds[0].label, 1);
        assert_eq!(ds[0].graphs[0].features()[1], vec![3.0, 6.0]);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let ds = ingest_reader(CSV.as_bytes(), &CsvSchema::default(), None).unwrap();
        let json = dataset_to_json(&ds).unwrap();
        assert!(!json.contains("delta"));
        assert_eq!(dataset_from_json(&json).unwrap(), ds);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        assert_eq!(ingest_reader(buf.as_slice(), &CsvSchema::default(), None).unwrap(), ds);
    }
}
