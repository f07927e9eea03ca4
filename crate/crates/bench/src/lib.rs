//! Fixed workloads shared by the criterion benches.

use netsync::cover::{build_cover_sync, LayeredCover};
use netsync::{generate, Family, GraphSpec, NetworkGraph};

pub fn graph(family: Family, n: usize) -> NetworkGraph {
    generate(&GraphSpec::new(family, n, 1)).expect("fixture graph")
}

/// Layers `2^j`, `j ≤ top`, built by the lockstep runner.
pub fn layered(g: &NetworkGraph, top: u32) -> LayeredCover {
    let mut l = LayeredCover::default();
    for j in 0..=top {
        l.insert(j, build_cover_sync(g, 1 << j).expect("fixture cover"));
    }
    l
}
