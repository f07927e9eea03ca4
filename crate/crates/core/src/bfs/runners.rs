//! Executing cover construction inside a simulation, and growing layered covers.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{staged_pass, Gate};
use crate::cluster::convergecast::{spanning_check, Sum};
use crate::cluster::{tree_aggregate, ClusterId, ClusterTree};
use crate::cover::{build_cover, DecomposeStats, LayeredCover, Reach, StepRunner};
use crate::engine::categorize_cover;
use crate::error::Result;
use crate::graph::{NetworkGraph, NodeId};
use crate::sim::Session;
use crate::synchronizer::alpha::alpha_in_session;
use crate::sync_rt::{PulseCtx, SyncProgram};

/// Labelled multi-source BFS as a lockstep program; payload is `(label, hops)`.
#[derive(Clone, Debug)]
pub(crate) struct LabeledBfs {
    nbrs: Vec<NodeId>,
    depth: u32,
    source: Option<u32>,
    reach: Option<Reach>,
}

impl SyncProgram for LabeledBfs {
    type Msg = (u32, u32);
    type Output = Reach;

    fn init(&mut self, ctx: &mut PulseCtx<'_, (u32, u32)>) {
        let Some(label) = self.source else { return };
        self.reach = Some(Reach { label, parent: None, dist: 0 });
        if self.depth > 0 {
            for &u in &self.nbrs {
                ctx.send(u, (label, 0));
            }
        }
    }

    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, (u32, u32)>, inbox: &[(NodeId, (u32, u32))], _: &[NodeId]) {
        if self.reach.is_some() {
            return;
        }
        let Some((label, dist, from)) = inbox.iter().map(|&(u, (l, d))| (l, d, u)).min() else { return };
        let dist = dist + 1;
        self.reach = Some(Reach { label, parent: Some(from), dist });
        if dist < self.depth {
            for &u in &self.nbrs {
                if !inbox.iter().any(|m| m.0 == u) {
                    ctx.send(u, (label, dist));
                }
            }
        }
    }

    fn output(&self) -> Option<Reach> {
        self.reach
    }
}

pub(crate) fn labeled_programs(g: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Vec<LabeledBfs> {
    let mut label = vec![None; g.n()];
    for &(s, l) in sources {
        label[s as usize] = Some(l);
    }
    (0..g.n())
        .map(|v| LabeledBfs {
            nbrs: if mask[v] { g.neighbors(v as NodeId).iter().copied().filter(|&u| mask[u as usize]).collect() } else { vec![] },
            depth,
            source: label[v],
            reach: None,
        })
        .collect()
}

fn tally_in(
    session: &mut Session<'_>,
    trees: &[ClusterTree],
    contrib: &dyn Fn(NodeId, ClusterId) -> (u64, u64),
) -> Result<BTreeMap<ClusterId, (u64, u64)>> {
    session.set_category("tally");
    let res = tree_aggregate(session, trees, |v, w| {
        let (a, b) = contrib(v, w.cluster);
        (Sum(a), Sum(b))
    })?;
    Ok(trees
        .iter()
        .map(|t| {
            let (a, b) = &res[t.root as usize][&t.id];
            (t.id, (a.0, b.0))
        })
        .collect())
}

/// Runs each labelled BFS under the α synchronizer with exactly `depth` pulses.
pub(crate) struct AlphaRunner<'s, 'g> {
    pub session: &'s mut Session<'g>,
}

impl StepRunner for AlphaRunner<'_, '_> {
    fn labeled_bfs(&mut self, g: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Result<Vec<Option<Reach>>> {
        self.session.set_category("alpha-cover");
        let (progs, _) = alpha_in_session(self.session, labeled_programs(g, mask, sources, depth), depth)?;
        Ok(progs.iter().map(|p| p.reach).collect())
    }

    fn tally(
        &mut self,
        _: &NetworkGraph,
        trees: &[ClusterTree],
        contrib: &dyn Fn(NodeId, ClusterId) -> (u64, u64),
    ) -> Result<BTreeMap<ClusterId, (u64, u64)>> {
        tally_in(self.session, trees, contrib)
    }
}

/// Runs each labelled BFS as a staged pulse-gated BFS over the layers built so far.
pub(crate) struct EngineRunner<'s, 'g, 'c> {
    pub session: &'s mut Session<'g>,
    pub cover: &'c LayeredCover,
}

impl EngineRunner<'_, '_, '_> {
    /// Widest stage whose registrations the available layers serve.
    fn width(&self, depth: u32) -> u32 {
        if self.cover.spanning.is_some() {
            return depth.max(1);
        }
        let top = self.cover.layers.keys().next_back().copied().unwrap_or(5);
        1 << top.saturating_sub(4)
    }
}

impl StepRunner for EngineRunner<'_, '_, '_> {
    fn labeled_bfs(&mut self, _: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Result<Vec<Option<Reach>>> {
        let w = self.width(depth);
        let pass = staged_pass(self.session, self.cover, mask, sources, w, depth, Gate::Barrier, categorize_cover)?;
        Ok((0..pass.dist.len())
            .map(|v| pass.dist[v].map(|dist| Reach { label: pass.label[v].unwrap(), parent: pass.label_parent[v], dist }))
            .collect())
    }

    fn tally(
        &mut self,
        _: &NetworkGraph,
        trees: &[ClusterTree],
        contrib: &dyn Fn(NodeId, ClusterId) -> (u64, u64),
    ) -> Result<BTreeMap<ClusterId, (u64, u64)>> {
        tally_in(self.session, trees, contrib)
    }
}

/// Summary of one constructed cover layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerReport {
    pub j: u32,
    pub clusters: usize,
    pub colors: usize,
    pub decompose: DecomposeStats,
}

/// Layered cover grown during a run, starting from α-built base layers.
/// Every new layer is checked for a cluster holding every node of the mask;
/// once one exists no further layer is needed.
#[derive(Clone, Debug, Default)]
pub(crate) struct Bootstrap {
    pub layers: LayeredCover,
    pub reports: Vec<LayerReport>,
    /// `(layer, cluster)` of the spanning cluster.
    pub spanning: Option<(u32, ClusterId)>,
}

/// Radii `2^5` and `2^6` of the base layers.
pub(crate) const BASE_LAYERS: [u32; 2] = [5, 6];

impl Bootstrap {
    pub fn base(session: &mut Session<'_>, mask: &[bool]) -> Result<Self> {
        let g = session.graph();
        let mut b = Self::default();
        for j in BASE_LAYERS {
            let (cover, dec, st) = build_cover(g, mask, 1 << j, &mut AlphaRunner { session })?;
            b.reports.push(LayerReport { j, clusters: cover.clusters.len(), colors: dec.colors.len(), decompose: st });
            b.layers.insert(j, cover);
            b.detect_spanning(session, mask, j)?;
            if b.spanning.is_some() {
                break;
            }
        }
        Ok(b)
    }

    /// Builds the `2^j` layer with the pulse-gated BFS over the current layers,
    /// unless a spanning cluster is already known.
    pub fn grow(&mut self, session: &mut Session<'_>, mask: &[bool], j: u32) -> Result<()> {
        if self.spanning.is_some() {
            return Ok(());
        }
        let g = session.graph();
        let (cover, dec, st) = build_cover(g, mask, 1 << j, &mut EngineRunner { session, cover: &self.layers })?;
        self.reports.push(LayerReport { j, clusters: cover.clusters.len(), colors: dec.colors.len(), decompose: st });
        self.layers.insert(j, cover);
        self.detect_spanning(session, mask, j)
    }

    /// Distributed test of whether layer `j` has a cluster holding every node of `mask`.
    fn detect_spanning(&mut self, session: &mut Session<'_>, mask: &[bool], j: u32) -> Result<()> {
        session.set_category("span-check");
        let found = spanning_check(session, &self.layers.layers[&j].clusters, mask)?;
        if let Some(c) = found.iter().flatten().min().copied() {
            self.layers.spanning = Some(j);
            self.spanning = Some((j, c));
        }
        Ok(())
    }

    pub fn spanning_tree(&self) -> Option<&ClusterTree> {
        let (j, c) = self.spanning?;
        self.layers.layers[&j].clusters.iter().find(|t| t.id == c)
    }
}
