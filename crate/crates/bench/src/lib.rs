//! Shared fixtures for the benchmarks.

use salbfgs_core::ingest::{generate_drift_stream, DriftEvent, DriftSpec};
use salbfgs_core::Stream;

/// A logistic stream; with two or more batches a drift lands halfway through.
pub fn drift_stream(dim: usize, batches: usize, batch_size: usize, seed: u64) -> Stream {
    generate_drift_stream(&DriftSpec {
        dim,
        batches,
        batch_size,
        drifts: if batches > 1 {
            vec![DriftEvent {
                time: batches / 2,
                magnitude: 0.5,
            }]
        } else {
            vec![]
        },
        sparsity: 10.min(dim),
        weight_scale: 3.0,
        seed,
    })
    .expect("fixture spec is valid")
}
