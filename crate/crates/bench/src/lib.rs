//! Shared fixtures for the criterion benchmarks.

use wbstream_core::sparse::{SyndromeState, VectorRecovery};
use wbstream_core::{Result, SisSketch, SketchParams, StreamUpdate};

pub const SEED: [u8; 32] = [7u8; 32];

/// A k-sparse update batch over [0, n) with values in +-beta.
pub fn sparse_updates(n: usize, k: usize, beta: u64) -> Vec<StreamUpdate> {
    (0..k)
        .map(|j| {
            let i = (j * 2654435761) % n;
            let v = (j as i64 % beta as i64) + 1;
            StreamUpdate::new(vec![i], if j % 2 == 0 { v } else { -v })
        })
        .collect()
}

pub fn vector_pipeline(n: usize, k: usize, beta: u64, max_updates: u64) -> Result<VectorRecovery> {
    let params = SketchParams::for_vector(n, k, beta, max_updates, SEED)?;
    VectorRecovery::new(SisSketch::new(params), SyndromeState::new(n, k, beta, max_updates)?)
}
