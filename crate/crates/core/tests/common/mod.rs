#![allow(dead_code)]

use greenfl_core::dataset::{
    generate_synthetic, partition_evenly, train_test_split, FederatedPartition, SyntheticSpec, TimeSeriesDataset,
};

pub fn synthetic(n: usize, classes: usize, len: usize, separation: f64, seed: u64) -> TimeSeriesDataset {
    generate_synthetic(&SyntheticSpec {
        name: "syn".into(),
        n_samples: n,
        n_classes: classes,
        sequence_length: len,
        class_separation: separation,
        seed,
    })
    .unwrap()
}

/// `n` samples split 80/20 into an evenly partitioned training set over
/// `nodes` nodes and a global test set.
pub fn federation(n: usize, nodes: usize, separation: f64, seed: u64) -> FederatedPartition {
    let ds = synthetic(n, 2, 16, separation, seed);
    let (train, test) = train_test_split(&ds, 0.2, seed).unwrap();
    partition_evenly(&train, nodes, seed).unwrap().with_global_test(test).unwrap()
}
