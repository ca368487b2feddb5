//! Deterministic shard-ordered tree reduction.
//!
//! Work is split into a fixed number of contiguous shards that depends only on
//! the input length. Shards are reduced through a balanced binary tree whose
//! shape is a function of the shard count alone, so the floating point result
//! is the same for any rayon pool size.

use std::ops::Range;

/// Upper bound on items per shard before the shard count starts growing.
pub const SHARD_LEN: usize = 1024;
/// Upper bound on the number of shards.
pub const MAX_SHARDS: usize = 64;

/// Splits `0..len` into contiguous shards. The layout depends only on `len`.
pub fn shard_ranges(len: usize) -> Vec<Range<usize>> {
    if len == 0 {
        return Vec::new();
    }
    let count = len.div_ceil(SHARD_LEN).clamp(1, MAX_SHARDS);
    let base = len / count;
    let extra = len % count;
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let size = base + usize::from(i < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Evaluates `leaf` on every shard and merges results pairwise in shard order.
///
/// `combine(left, right)` always receives the lower-indexed subtree first.
pub fn tree_reduce<T, L, C>(shards: &[Range<usize>], leaf: &L, combine: &C) -> Option<T>
where
    T: Send,
    L: Fn(Range<usize>) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    match shards.len() {
        0 => None,
        1 => Some(leaf(shards[0].clone())),
        n => {
            let (lo, hi) = shards.split_at(n / 2);
            let (a, b) = rayon::join(
                || tree_reduce(lo, leaf, combine),
                || tree_reduce(hi, leaf, combine),
            );
            match (a, b) {
                (Some(a), Some(b)) => Some(combine(a, b)),
                (a, b) => a.or(b),
            }
        }
    }
}
