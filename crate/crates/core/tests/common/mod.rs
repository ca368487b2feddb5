#![allow(dead_code)]

use proptest::prelude::*;
use salbfgs_core::{Batch, Example, Label, SparseVector};

pub fn example(dim: u32) -> impl Strategy<Value = Example> {
    (
        proptest::collection::btree_map(0..dim, -3.0f64..3.0, 0..=dim as usize),
        any::<bool>(),
    )
        .prop_map(|(m, y)| {
            let entries: Vec<(u32, f64)> = m.into_iter().filter(|&(_, v)| v != 0.0).collect();
            Example::new(SparseVector::new(entries).unwrap(), Label::from(y))
        })
}

pub fn batch(dim: u32, t: usize, max_len: usize) -> impl Strategy<Value = Batch> {
    proptest::collection::vec(example(dim), 1..=max_len).prop_map(move |ex| Batch::new(t, ex).unwrap())
}

pub fn batches(dim: u32, max_batches: usize, max_len: usize) -> impl Strategy<Value = Vec<Batch>> {
    proptest::collection::vec(proptest::collection::vec(example(dim), 1..=max_len), 1..=max_batches).prop_map(|bs| {
        bs.into_iter()
            .enumerate()
            .map(|(t, ex)| Batch::new(t, ex).unwrap())
            .collect()
    })
}

pub fn theta(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, dim)
}
