//! Complete BFS: doubling thresholded passes interleaved with cover growth,
//! stopped by one of two termination tests.

use serde::Serialize;

use super::runners::{Bootstrap, LayerReport};
use super::{bfs_pass, check_sources, Pass};
use crate::cluster::convergecast::All;
use crate::cluster::{kind, tag, tree_aggregate};
use crate::cover::LayeredCover;
use crate::engine::{categorize, EngineStats};
use crate::error::{violation, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::sim::{AdversarySpec, Ctx, NodeProgram, RunMetrics, Session, Tag};

/// How a complete BFS decides it is finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    /// Once some cluster contains every node, ask it whether every node was reached.
    Approach1,
    /// Ask whether any node at the threshold depth has an unreached neighbour.
    /// Sources whose subtrees have none die and leave later iterations.
    Approach2,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompleteBfs {
    pub dist: Vec<Option<u32>>,
    pub parent: Vec<Option<NodeId>>,
    pub metrics: RunMetrics,
    pub stats: EngineStats,
    /// Thresholded passes run.
    pub iterations: u32,
    pub layers: Vec<LayerReport>,
    /// Layers built during the run, each over the nodes alive when it was built.
    #[serde(skip)]
    pub covers: LayeredCover,
    pub log_digest: String,
}

impl CompleteBfs {
    pub fn to_text(&self) -> String {
        super::BfsOutcome {
            dist: self.dist.clone(),
            parent: self.parent.clone(),
            metrics: self.metrics.clone(),
            stats: self.stats.clone(),
            log_digest: self.log_digest.clone(),
        }
        .to_text()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum FrontierMsg {
    /// Sent once along every masked edge.
    Info { reached: bool, child: bool },
    Up(bool),
    Down(bool),
}

/// Frontier test over the label trees of one pass.
struct FrontierCheck {
    depth: u32,
    dist: Option<u32>,
    parent: Option<NodeId>,
    nbrs: Vec<NodeId>,
    infos: usize,
    children: Vec<NodeId>,
    frontier: bool,
    ups: usize,
    up_sent: bool,
    alive: Option<bool>,
}

impl FrontierCheck {
    fn maybe_up(&mut self, ctx: &mut Ctx<'_, FrontierMsg>) {
        if self.up_sent || self.dist.is_none() || self.infos < self.nbrs.len() || self.ups < self.children.len() {
            return;
        }
        self.up_sent = true;
        match self.parent {
            Some(p) => ctx.send(p, FrontierMsg::Up(self.frontier), tag(kind::QUERY, 0, 1), 1),
            None => self.decide(ctx, self.frontier),
        }
    }

    fn decide(&mut self, ctx: &mut Ctx<'_, FrontierMsg>, alive: bool) {
        self.alive = Some(alive);
        for &c in &self.children {
            ctx.send(c, FrontierMsg::Down(alive), tag(kind::QUERY, 0, 2), 2);
        }
    }
}

impl NodeProgram for FrontierCheck {
    type Msg = FrontierMsg;

    fn on_start(&mut self, ctx: &mut Ctx<'_, FrontierMsg>) {
        for &u in &self.nbrs {
            let m = FrontierMsg::Info { reached: self.dist.is_some(), child: self.dist.is_some() && self.parent == Some(u) };
            ctx.send(u, m, tag(kind::QUERY, 0, 0), 0);
        }
        self.maybe_up(ctx);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, FrontierMsg>, from: NodeId, msg: FrontierMsg, _: Tag) {
        match msg {
            FrontierMsg::Info { reached, child } => {
                self.infos += 1;
                if child {
                    self.children.push(from);
                }
                if !reached && self.dist == Some(self.depth) {
                    self.frontier = true;
                }
            }
            FrontierMsg::Up(f) => {
                self.ups += 1;
                self.frontier |= f;
            }
            FrontierMsg::Down(a) => self.decide(ctx, a),
        }
        self.maybe_up(ctx);
    }
}

/// Runs the frontier test; returns, per masked reached node, whether its source stays alive.
fn frontier_check(session: &mut Session<'_>, mask: &[bool], pass: &Pass, depth: u32) -> Result<Vec<Option<bool>>> {
    let g = session.graph();
    let mut progs: Vec<FrontierCheck> = (0..g.n())
        .map(|v| FrontierCheck {
            depth,
            dist: pass.dist[v].filter(|_| mask[v]),
            parent: pass.label_parent[v],
            nbrs: if mask[v] { g.neighbors(v as NodeId).iter().copied().filter(|&u| mask[u as usize]).collect() } else { vec![] },
            infos: 0,
            children: Vec::new(),
            frontier: false,
            ups: 0,
            up_sent: false,
            alive: None,
        })
        .collect();
    session.set_category("termination");
    session.run(&mut progs)?;
    for (v, p) in progs.iter().enumerate() {
        if p.dist.is_some() && p.alive.is_none() {
            return Err(violation(v as NodeId, "frontier check never decided"));
        }
    }
    Ok(progs.into_iter().map(|p| p.alive).collect())
}

/// Single-source BFS over the whole graph; no cover is needed up front.
pub fn complete_bfs(g: &NetworkGraph, s: NodeId, termination: Termination, adv: &AdversarySpec) -> Result<CompleteBfs> {
    complete_bfs_multi(g, &[s], termination, adv)
}

/// Distances to the nearest source of `sources`.
///
/// Iteration `t` runs a `2^t`-thresholded pass and, unless it terminated,
/// builds the `2^{t+7}` cover layer on the nodes still alive.
pub fn complete_bfs_multi(g: &NetworkGraph, sources: &[NodeId], termination: Termination, adv: &AdversarySpec) -> Result<CompleteBfs> {
    check_sources(g, sources)?;
    let n = g.n();
    let mut session = Session::new(g, adv);
    let mut mask = vec![true; n];
    let mut boot = Bootstrap::base(&mut session, &mask)?;
    let mut dist = vec![None; n];
    let mut parent = vec![None; n];
    let mut alive_sources: Vec<NodeId> = sources.to_vec();
    alive_sources.sort_unstable();
    alive_sources.dedup();
    let mut stats = EngineStats::default();
    let mut t = 0u32;
    loop {
        let depth = 1u32 << t;
        let labelled: Vec<(NodeId, u32)> = alive_sources.iter().map(|&s| (s, s)).collect();
        let pass = bfs_pass(&mut session, &boot.layers, &mask, &labelled, &vec![false; n], depth, false, categorize)?;
        stats.absorb(&pass.stats);
        for v in (0..n).filter(|&v| mask[v]) {
            dist[v] = pass.dist[v];
            parent[v] = pass.label_parent[v];
        }
        let done = match termination {
            Termination::Approach1 => match boot.spanning_tree().cloned() {
                Some(tree) => {
                    session.set_category("termination");
                    let res = tree_aggregate(&mut session, std::slice::from_ref(&tree), |v, _| All(dist[v as usize].is_some()))?;
                    res[tree.root as usize][&tree.id].0
                }
                None => false,
            },
            Termination::Approach2 => {
                let alive = frontier_check(&mut session, &mask, &pass, depth)?;
                alive_sources.retain(|&s| alive[s as usize] == Some(true));
                for v in 0..n {
                    if alive[v] == Some(false) {
                        mask[v] = false;
                    }
                }
                alive_sources.is_empty()
            }
        };
        if done {
            break;
        }
        boot.grow(&mut session, &mask, t + 7)?;
        t += 1;
        if t > 40 {
            return Err(violation(0, "complete BFS did not terminate"));
        }
    }
    Ok(CompleteBfs {
        dist,
        parent,
        metrics: session.metrics(),
        stats,
        iterations: t + 1,
        layers: boot.reports,
        covers: boot.layers,
        log_digest: session.log().digest(),
    })
}
