//! Dataset representation, CSV ingest/export and resampling primitives.

mod dataset;
mod io;
mod split;

pub use dataset::{CreditDataset, Label, PartitionedData, SealedLabels};
pub use io::{load_csv, write_csv, CsvOptions};
pub(crate) use io::{format_f64, write_text};
pub use split::{
    bootstrap_indices, bootstrap_sample, stratified_kfold, stratified_split, FoldAssignment,
};
