//! End-to-end applications built on the synchronizer stack.

pub mod leader;
pub mod programs;

use std::collections::BTreeSet;

use crate::bfs::{complete_bfs_multi, CompleteBfs, Termination};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::sim::AdversarySpec;
use crate::synchronizer::{synchronize, Mode, SyncOutcome};

pub use leader::LeaderElection;
pub use programs::{Boruvka, Flood, MinFlood};

/// Leader election through the synchronizer with unknown running time.
pub fn leader_election(g: &NetworkGraph, adv: &AdversarySpec) -> Result<SyncOutcome<LeaderElection>> {
    synchronize(g, LeaderElection::for_graph(g), Mode::UnknownT, adv)
}

/// Epochs run by the winner of a finished election.
pub fn election_epochs(out: &SyncOutcome<LeaderElection>) -> u32 {
    out.programs.iter().map(LeaderElection::epochs).max().unwrap_or(0)
}

/// Borůvka MST through the synchronizer; weights must be distinct.
pub fn mst(g: &NetworkGraph, adv: &AdversarySpec) -> Result<SyncOutcome<Boruvka>> {
    if !g.is_weighted() {
        return Err(Error::Unweighted);
    }
    synchronize(g, Boruvka::for_graph(g), Mode::UnknownT, adv)
}

/// Union of the per-node incident MST edges, each as `(min, max)`.
pub fn mst_edges(out: &SyncOutcome<Boruvka>) -> BTreeSet<(NodeId, NodeId)> {
    out.outputs.iter().flatten().flatten().copied().collect()
}

/// BFS tree (or forest, for several sources) with distances and parents.
pub fn bfs_app(g: &NetworkGraph, sources: &[NodeId], adv: &AdversarySpec) -> Result<CompleteBfs> {
    complete_bfs_multi(g, sources, Termination::Approach2, adv)
}

#[cfg(test)]
mod tests;
