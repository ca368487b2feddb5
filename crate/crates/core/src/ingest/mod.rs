//! Input formats, feature hashing, CTR aggregation and synthetic streams.

pub mod ctr;
pub mod format;
pub mod hashing;
pub mod synth;

pub use ctr::{aggregate_ctr, read_ctr_table, write_ctr_table, ClickRecord, CtrSmoothing, CtrTable};
pub use format::{
    format_example, list_batch_files, parse_indexed_line, parse_line, parse_namespaced_line, read_batch_dir,
    read_examples, write_batch_dir, RawRecord,
};
pub use hashing::{fnv1a64, hash_conjunction, hash_feature, HashConfig};
pub use synth::{generate_drift_stream, DriftEvent, DriftSpec};
