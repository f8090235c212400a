//! Histogram ingestion, synthetic datasets and the experiment harness.

mod data;
mod experiment;

pub use data::{load_histogram, synth_dataset, Histogram, SynthKind};
pub use experiment::{
    emit_curve, emit_report, run_experiment, CellSummary, DatasetSource, ExperimentConfig,
    ExperimentReport, MechanismEntry, ReportMetadata, REPORT_VERSION,
};
