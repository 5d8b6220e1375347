//! Turns a long-format measurement CSV into per-signal path graphs.
//!
//! `cargo run --release --example ingest_csv`

use superman::signal_graphs::{dataset_to_json, ingest_reader, summarize, CsvSchema};

const CSV: &str = "\
entity_id,signal_type,timestamp,value,label
p1,CRP,0,5.0,1
p1,CRP,3,7.5,1
p1,CRP,4.5,9.0,1
p1,Hb,1,12.0,1
p2,CRP,2,1.0,0
p2,Hb,0,14.1,0
p2,Hb,6,13.8,0
p3,Hb,2,9.5,1
";

fn main() -> superman::Result<()> {
    let data = ingest_reader(CSV.as_bytes(), &CsvSchema::default(), None)?;
    println!("{:#?}", summarize(&data));
    for s in &data {
        for g in &s.graphs {
            println!("{} {}: t={:?} edges={:?}", s.entity_id, g.signal_type(), g.timestamps(), g.edges());
        }
    }
    let json = dataset_to_json(&data)?;
    println!("json: {} bytes", json.len());
    Ok(())
}
