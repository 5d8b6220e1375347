//! Irregular time-stamped measurements as sets of directed signal graphs.

mod graph;
mod ingest;
mod normalize;
mod partition;

pub use graph::{build_path_graph, DeltaPolicy, Direction, GraphJson, MeasurementRecord, SignalGraph};
pub use ingest::{
    dataset_from_json, dataset_to_json, ingest_csv, ingest_reader, read_dataset, read_labels, signal_widths, summarize,
    write_csv, CsvSchema, DatasetSummary,
};
pub use normalize::{normalize_features, NormConfig, NormStats, SignalStats};
pub use partition::{
    validate_partition, Collector, FeatureGrouping, GraphSet, GroupingConfig, PartitionReport, SubsetPartition,
};

/// Applies a distance sparsity policy to every graph of every sample.
pub fn mask_dataset(dataset: &mut [GraphSet], policy: DeltaPolicy) -> crate::Result<()> {
    if policy == DeltaPolicy::Full {
        return Ok(());
    }
    for s in dataset.iter_mut() {
        for g in s.graphs.iter_mut() {
            *g = g.mask_delta(policy)?;
        }
    }
    Ok(())
}
