//! Manifest ingestion, patient-aware splitting, phantom generation and
//! experiment orchestration.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod phantom;
pub mod preprocess;
pub mod split;

pub use config::RunConfig;
pub use experiment::{
    augment_split, build_network, evaluate_items, evaluate_run, prepare, report, run_experiment,
    run_prepared, run_sweep, summary_csv, Evaluation, PreparedData, RunOutcome, SummaryRow,
    SweepReport,
};
pub use manifest::{
    grade_counts, load_manifest, load_manifest_with, validate_distribution, write_manifest,
    ManifestOptions, Sample, Side, KL_REFERENCE_COUNTS,
};
pub use phantom::{gap_width, generate_phantom_dataset, phantom_knee};
pub use preprocess::{load_preprocessed, preprocess_all, preprocess_image};
pub use split::{split_indices, split_patients, SplitDataset, SplitFractions};
