//! Pulse-gated asynchronous BFS: thresholded, multi-source, staged, and the
//! complete drivers that build their own covers.

mod complete;
pub(crate) mod runners;

pub use complete::{complete_bfs, complete_bfs_multi, CompleteBfs, Termination};
pub use runners::LayerReport;

use std::rc::Rc;

use serde::Serialize;

use crate::cover::LayeredCover;
use crate::engine::categorize;
use crate::engine::{first_error, total_stats, App, EngineNode, EngineStats, Layout};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::pulse::Pulse;
use crate::sim::{AdversarySpec, RunMetrics, Session, Tag};

pub(crate) type Categorizer = fn(Tag) -> &'static str;

#[derive(Clone, Debug)]
pub(crate) struct BfsApp {
    label: Option<u32>,
    settled: bool,
    mask: Rc<Vec<bool>>,
}

impl App for BfsApp {
    type Payload = u32;
    const SELF_CHILD: bool = false;

    fn init(&mut self, _: NodeId, nbrs: &[NodeId]) -> Option<Vec<(NodeId, u32)>> {
        let label = self.label?;
        Some(nbrs.iter().filter(|&&u| self.mask[u as usize]).map(|&u| (u, label)).collect())
    }

    fn admits(&self, busy: bool) -> bool {
        !busy && !self.settled
    }

    fn release(&mut self, _: NodeId, _: Pulse, nbrs: &[NodeId], inbox: &[(NodeId, u32)], _: &[NodeId]) -> (Vec<(NodeId, u32)>, bool) {
        let label = inbox.iter().map(|&(u, l)| (l, u)).min().map(|x| x.0);
        self.label = label;
        let Some(label) = label else { return (Vec::new(), false) };
        let sends = nbrs
            .iter()
            .filter(|&&u| self.mask[u as usize] && !inbox.iter().any(|x| x.0 == u))
            .map(|&u| (u, label))
            .collect();
        (sends, false)
    }

    fn output_on_join(&self) -> bool {
        true
    }
}

/// Per-node result of one BFS pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Pass {
    pub dist: Vec<Option<u32>>,
    /// Execution-tree parent: the first proposal a node accepted.
    pub parent: Vec<Option<NodeId>>,
    pub label: Vec<Option<u32>>,
    /// Smallest `(label, sender)` among the proposals of the previous pulse.
    pub label_parent: Vec<Option<NodeId>>,
    pub stats: EngineStats,
}

/// One thresholded BFS inside `session` from labelled `sources` to depth `depth`.
/// Nodes with `settled` set decline every proposal.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bfs_pass(
    session: &mut Session<'_>,
    cover: &LayeredCover,
    mask: &[bool],
    sources: &[(NodeId, u32)],
    settled: &[bool],
    depth: u32,
    check: bool,
    cat: Categorizer,
) -> Result<Pass> {
    if depth == 0 {
        return Err(Error::Usage("BFS depth must be positive".into()));
    }
    let n = session.graph().n();
    let layout = Rc::new(Layout::new(n, cover, depth - 1, check.then_some(depth as u64), mask.to_vec())?);
    let shared_mask = Rc::new(mask.to_vec());
    let mut label = vec![None; n];
    for &(s, l) in sources {
        if !mask[s as usize] {
            return Err(Error::Usage(format!("source {s} lies outside the mask")));
        }
        label[s as usize] = Some(l);
    }
    let mut nodes: Vec<EngineNode<BfsApp>> = (0..n)
        .map(|v| {
            let app = BfsApp { label: label[v], settled: settled[v], mask: shared_mask.clone() };
            EngineNode::new(v as NodeId, layout.clone(), app, depth - 1, Some(depth))
        })
        .collect();
    session.set_categorizer(cat);
    session.run(&mut nodes)?;
    first_error(&nodes)?;
    let mut pass = Pass { stats: total_stats(&nodes), ..Default::default() };
    for (v, x) in nodes.iter().enumerate() {
        let d = x.first_pulse();
        if check && !x.notified {
            return Err(crate::error::violation(v as NodeId, "checking stage never notified"));
        }
        pass.dist.push(d);
        let (p, lab, lp) = match d {
            None => (None, None, None),
            Some(0) => (None, label[v], None),
            Some(q) => {
                let best = x.inbox.get(&(q - 1)).and_then(|ib| ib.iter().map(|&(u, l)| (l, u)).min());
                (x.vnodes[&q].parent, best.map(|b| b.0), best.map(|b| b.1))
            }
        };
        pass.parent.push(p);
        pass.label.push(lab);
        pass.label_parent.push(lp);
    }
    Ok(pass)
}

/// Outputs of a BFS run; `dist[v] = None` means `v` lies beyond the threshold.
#[derive(Clone, Debug, Serialize)]
pub struct BfsOutcome {
    pub dist: Vec<Option<u32>>,
    pub parent: Vec<Option<NodeId>>,
    pub metrics: RunMetrics,
    pub stats: EngineStats,
    pub log_digest: String,
}

impl BfsOutcome {
    /// `node pulse-or-inf parent-or-none` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (v, (d, p)) in self.dist.iter().zip(&self.parent).enumerate() {
            let d = d.map_or("inf".to_string(), |d| d.to_string());
            let p = p.map_or("none".to_string(), |p| p.to_string());
            s.push_str(&format!("{v} {d} {p}\n"));
        }
        s
    }
}

fn check_sources(g: &NetworkGraph, sources: &[NodeId]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    if let Some(s) = sources.iter().find(|&&s| s as usize >= g.n()) {
        return Err(Error::Usage(format!("source {s} out of range")));
    }
    Ok(())
}

fn finish(session: &Session<'_>, dist: Vec<Option<u32>>, parent: Vec<Option<NodeId>>, stats: EngineStats) -> BfsOutcome {
    BfsOutcome { dist, parent, metrics: session.metrics(), stats, log_digest: session.log().digest() }
}

/// Single-source BFS to depth `2^t` followed by the checking stage.
pub fn thresholded_bfs(g: &NetworkGraph, cover: &LayeredCover, s: NodeId, t: u32, adv: &AdversarySpec) -> Result<BfsOutcome> {
    thresholded_bfs_multi(g, cover, &[s], t, adv)
}

/// [`thresholded_bfs`] from a source set: distances are to the nearest source.
pub fn thresholded_bfs_multi(
    g: &NetworkGraph,
    cover: &LayeredCover,
    sources: &[NodeId],
    t: u32,
    adv: &AdversarySpec,
) -> Result<BfsOutcome> {
    check_sources(g, sources)?;
    let mut session = Session::new(g, adv);
    let labelled: Vec<(NodeId, u32)> = sources.iter().map(|&s| (s, s)).collect();
    let mask = vec![true; g.n()];
    let pass = bfs_pass(&mut session, cover, &mask, &labelled, &vec![false; g.n()], 1 << t, true, categorize)?;
    Ok(finish(&session, pass.dist, pass.parent, pass.stats))
}

/// How consecutive stages of a staged BFS are separated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// Each stage ends with a done-convergecast on a cover of its width.
    DoneConvergecast,
    /// The driver waits for quiescence; no messages are spent on gating.
    Barrier,
}

/// BFS to depth `depth` in stages of width `width` inside an existing session.
#[allow(clippy::too_many_arguments)]
pub(crate) fn staged_pass(
    session: &mut Session<'_>,
    cover: &LayeredCover,
    mask: &[bool],
    sources: &[(NodeId, u32)],
    width: u32,
    depth: u32,
    gate: Gate,
    cat: Categorizer,
) -> Result<Pass> {
    let n = session.graph().n();
    let mut out = Pass {
        dist: vec![None; n],
        parent: vec![None; n],
        label: vec![None; n],
        label_parent: vec![None; n],
        stats: EngineStats::default(),
    };
    for &(s, l) in sources {
        out.dist[s as usize] = Some(0);
        out.label[s as usize] = Some(l);
    }
    let mut frontier: Vec<(NodeId, u32)> = sources.to_vec();
    let mut offset = 0u32;
    while offset < depth && !frontier.is_empty() {
        let w = width.min(depth - offset);
        let settled: Vec<bool> = out.dist.iter().map(Option::is_some).collect();
        let pass = bfs_pass(session, cover, mask, &frontier, &settled, w, gate == Gate::DoneConvergecast, cat)?;
        out.stats.absorb(&pass.stats);
        frontier.clear();
        for v in 0..n {
            if let Some(d) = pass.dist[v].filter(|&d| d > 0) {
                out.dist[v] = Some(offset + d);
                out.parent[v] = pass.parent[v];
                out.label[v] = pass.label[v];
                out.label_parent[v] = pass.label_parent[v];
                if d == w {
                    frontier.push((v as NodeId, pass.label[v].expect("reached nodes carry labels")));
                }
            }
        }
        offset += w;
    }
    Ok(out)
}

/// BFS to depth `2^t · stages` run as `stages` gated `2^t`-thresholded stages.
pub fn staged_bfs(
    g: &NetworkGraph,
    cover: &LayeredCover,
    sources: &[NodeId],
    t: u32,
    stages: u32,
    adv: &AdversarySpec,
) -> Result<BfsOutcome> {
    check_sources(g, sources)?;
    if stages == 0 {
        return Err(Error::Usage("staged BFS needs at least one stage".into()));
    }
    let mut session = Session::new(g, adv);
    let labelled: Vec<(NodeId, u32)> = sources.iter().map(|&s| (s, s)).collect();
    let mask = vec![true; g.n()];
    let width = 1u32 << t;
    let pass = staged_pass(&mut session, cover, &mask, &labelled, width, width * stages, Gate::DoneConvergecast, categorize)?;
    Ok(finish(&session, pass.dist, pass.parent, pass.stats))
}
