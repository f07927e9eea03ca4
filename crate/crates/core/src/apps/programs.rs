//! Event-driven synchronous programs used as synchronizer workloads.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{NetworkGraph, NodeId};
use crate::sync_rt::{PulseCtx, SyncProgram};

/// Hop-count flooding from a set of initiators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Flood {
    initiator: bool,
    hops: Option<u32>,
}

impl Flood {
    pub fn for_graph(g: &NetworkGraph, initiators: &[NodeId]) -> Vec<Self> {
        (0..g.n() as NodeId).map(|v| Flood { initiator: initiators.contains(&v), hops: None }).collect()
    }
}

impl SyncProgram for Flood {
    type Msg = u32;
    type Output = u32;

    fn init(&mut self, ctx: &mut PulseCtx<'_, u32>) {
        if self.initiator {
            self.hops = Some(0);
            for &v in ctx.neighbors() {
                ctx.send(v, 0);
            }
        }
    }

    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, u32>, inbox: &[(NodeId, u32)], _: &[NodeId]) {
        if self.hops.is_some() || inbox.is_empty() {
            return;
        }
        let h = inbox.iter().map(|m| m.1).min().unwrap() + 1;
        self.hops = Some(h);
        for &v in ctx.neighbors() {
            if !inbox.iter().any(|m| m.0 == v) {
                ctx.send(v, h);
            }
        }
    }

    fn output(&self) -> Option<u32> {
        self.hops
    }
}

/// Minimum-identifier flooding; every node starts as a candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct MinFlood {
    best: NodeId,
}

impl MinFlood {
    pub fn for_graph(g: &NetworkGraph) -> Vec<Self> {
        (0..g.n() as NodeId).map(|v| MinFlood { best: v }).collect()
    }
}

impl SyncProgram for MinFlood {
    type Msg = NodeId;
    type Output = NodeId;

    fn init(&mut self, ctx: &mut PulseCtx<'_, NodeId>) {
        for &v in ctx.neighbors() {
            ctx.send(v, self.best);
        }
    }

    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, NodeId>, inbox: &[(NodeId, NodeId)], _: &[NodeId]) {
        let Some(m) = inbox.iter().map(|x| x.1).min() else { return };
        if m < self.best {
            self.best = m;
            for &v in ctx.neighbors() {
                ctx.send(v, m);
            }
        }
    }

    fn output(&self) -> Option<NodeId> {
        Some(self.best)
    }
}

/// `(weight, smaller endpoint, larger endpoint)`; weights are distinct.
pub type WEdge = (u64, NodeId, NodeId);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MstItem {
    Announce { phase: u32, frag: NodeId },
    Report { phase: u32, best: Option<WEdge> },
    Chosen { phase: u32, edge: Option<WEdge> },
    Pick { phase: u32, yes: bool },
    Merge { phase: u32, min: NodeId },
    NewFragment { phase: u32, frag: NodeId },
}

#[derive(Clone, Debug, PartialEq)]
enum Step {
    Collect,
    AwaitChosen,
    Chosen(Option<WEdge>),
    AwaitPicks { edge: WEdge, parent: Option<NodeId> },
    AwaitMerges { parent: Option<NodeId>, children: BTreeSet<NodeId>, tree: BTreeSet<NodeId> },
    AwaitNewFragment { parent: Option<NodeId>, children: BTreeSet<NodeId>, tree: BTreeSet<NodeId> },
    Done,
}

/// Phase-structured Borůvka. Each phase: announce fragment ids, convergecast
/// the minimum outgoing edge, broadcast the choice, tell foreign neighbours
/// whether their edge was picked, convergecast the minimum id over the merged
/// tree toward the core edge, then broadcast the new fragment id.
#[derive(Clone, Debug, PartialEq)]
pub struct Boruvka {
    id: NodeId,
    nbrs: Vec<(NodeId, u64)>,
    phase: u32,
    frag: NodeId,
    parent: Option<NodeId>,
    tree: BTreeSet<NodeId>,
    step: Step,
    /// Child that reported this node's subtree minimum, if not local.
    best_via: Option<NodeId>,
    best: Option<WEdge>,
    announces: BTreeMap<u32, BTreeMap<NodeId, NodeId>>,
    reports: BTreeMap<u32, BTreeMap<NodeId, Option<WEdge>>>,
    chosen: BTreeMap<u32, Option<WEdge>>,
    picks: BTreeMap<u32, BTreeMap<NodeId, bool>>,
    merges: BTreeMap<u32, BTreeMap<NodeId, NodeId>>,
    new_frag: BTreeMap<u32, NodeId>,
}

fn wedge(w: u64, a: NodeId, b: NodeId) -> WEdge {
    (w, a.min(b), a.max(b))
}

impl Boruvka {
    pub fn for_graph(g: &NetworkGraph) -> Vec<Self> {
        (0..g.n() as NodeId)
            .map(|v| Boruvka {
                id: v,
                nbrs: g.neighbors(v).iter().map(|&u| (u, g.weight(v, u).expect("weighted graph"))).collect(),
                phase: 0,
                frag: v,
                parent: None,
                tree: BTreeSet::new(),
                step: Step::Collect,
                best_via: None,
                best: None,
                announces: BTreeMap::new(),
                reports: BTreeMap::new(),
                chosen: BTreeMap::new(),
                picks: BTreeMap::new(),
                merges: BTreeMap::new(),
                new_frag: BTreeMap::new(),
            })
            .collect()
    }

    fn children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.tree.iter().copied().filter(move |&c| Some(c) != self.parent)
    }

    fn foreign(&self) -> Vec<NodeId> {
        let ann = &self.announces[&self.phase];
        self.nbrs.iter().map(|n| n.0).filter(|y| ann[y] != self.frag).collect()
    }

    fn absorb(&mut self, from: NodeId, item: MstItem) {
        match item {
            MstItem::Announce { phase, frag } => {
                self.announces.entry(phase).or_default().insert(from, frag);
            }
            MstItem::Report { phase, best } => {
                self.reports.entry(phase).or_default().insert(from, best);
            }
            MstItem::Chosen { phase, edge } => {
                self.chosen.insert(phase, edge);
            }
            MstItem::Pick { phase, yes } => {
                self.picks.entry(phase).or_default().insert(from, yes);
            }
            MstItem::Merge { phase, min } => {
                self.merges.entry(phase).or_default().insert(from, min);
            }
            MstItem::NewFragment { phase, frag } => {
                self.new_frag.insert(phase, frag);
            }
        }
    }

    fn progress(&mut self, out: &mut BTreeMap<NodeId, Vec<MstItem>>) {
        let k = self.phase;
        loop {
            match self.step.clone() {
                Step::Collect => {
                    let ann = self.announces.entry(k).or_default().len();
                    let children: Vec<NodeId> = self.children().collect();
                    let reps = self.reports.get(&k);
                    if ann < self.nbrs.len() || !children.iter().all(|c| reps.is_some_and(|r| r.contains_key(c))) {
                        return;
                    }
                    let ann = &self.announces[&k];
                    let mut best = self
                        .nbrs
                        .iter()
                        .filter(|(y, _)| ann[y] != self.frag)
                        .map(|&(y, w)| wedge(w, self.id, y))
                        .min();
                    self.best_via = None;
                    for c in children {
                        if let Some(e) = self.reports[&k][&c] {
                            if best.is_none_or(|b| e < b) {
                                best = Some(e);
                                self.best_via = Some(c);
                            }
                        }
                    }
                    self.best = best;
                    match self.parent {
                        Some(p) => {
                            out.entry(p).or_default().push(MstItem::Report { phase: k, best });
                            self.step = Step::AwaitChosen;
                        }
                        None => self.step = Step::Chosen(best),
                    }
                }
                Step::AwaitChosen => match self.chosen.get(&k) {
                    Some(&c) => self.step = Step::Chosen(c),
                    None => return,
                },
                Step::Chosen(c) => {
                    for ch in self.children().collect::<Vec<_>>() {
                        out.entry(ch).or_default().push(MstItem::Chosen { phase: k, edge: c });
                    }
                    let Some(e) = c else {
                        self.step = Step::Done;
                        return;
                    };
                    let parent = if e.1 == self.id || e.2 == self.id {
                        Some(if e.1 == self.id { e.2 } else { e.1 })
                    } else if self.best == Some(e) {
                        self.best_via
                    } else {
                        self.parent
                    };
                    for y in self.foreign() {
                        let yes = e.1 == self.id.min(y) && e.2 == self.id.max(y);
                        out.entry(y).or_default().push(MstItem::Pick { phase: k, yes });
                    }
                    self.step = Step::AwaitPicks { edge: e, parent };
                }
                Step::AwaitPicks { edge, mut parent } => {
                    let foreign = self.foreign();
                    let picks = self.picks.get(&k);
                    if !foreign.iter().all(|y| picks.is_some_and(|p| p.contains_key(y))) {
                        return;
                    }
                    let picks = self.picks.get(&k).cloned().unwrap_or_default();
                    let mine = |y: NodeId| edge.1 == self.id.min(y) && edge.2 == self.id.max(y);
                    let mut tree = self.tree.clone();
                    let mut children: BTreeSet<NodeId> = self.tree.iter().copied().filter(|&c| Some(c) != parent).collect();
                    for &y in &foreign {
                        if picks[&y] || mine(y) {
                            tree.insert(y);
                        }
                        if picks[&y] && !mine(y) {
                            children.insert(y);
                        }
                        if picks[&y] && mine(y) && self.id < y {
                            // Core edge: the smaller endpoint roots the merged tree.
                            parent = None;
                            children.insert(y);
                        }
                    }
                    self.step = Step::AwaitMerges { parent, children, tree };
                }
                Step::AwaitMerges { parent, children, tree } => {
                    let got = self.merges.get(&k);
                    if !children.iter().all(|c| got.is_some_and(|g| g.contains_key(c))) {
                        return;
                    }
                    let min = children.iter().map(|c| self.merges[&k][c]).fold(self.id, NodeId::min);
                    match parent {
                        Some(p) => {
                            out.entry(p).or_default().push(MstItem::Merge { phase: k, min });
                            self.step = Step::AwaitNewFragment { parent, children, tree };
                        }
                        None => {
                            self.new_frag.insert(k + 1, min);
                            self.step = Step::AwaitNewFragment { parent, children, tree };
                        }
                    }
                }
                Step::AwaitNewFragment { parent, children, tree } => {
                    let Some(&frag) = self.new_frag.get(&(k + 1)) else { return };
                    for &c in &children {
                        out.entry(c).or_default().push(MstItem::NewFragment { phase: k + 1, frag });
                    }
                    self.parent = parent;
                    self.tree = tree;
                    self.frag = frag;
                    self.phase = k + 1;
                    self.step = Step::Collect;
                    self.start_phase(out);
                    return self.progress(out);
                }
                Step::Done => return,
            }
        }
    }

    fn start_phase(&mut self, out: &mut BTreeMap<NodeId, Vec<MstItem>>) {
        for &(y, _) in &self.nbrs {
            out.entry(y).or_default().push(MstItem::Announce { phase: self.phase, frag: self.frag });
        }
    }

    fn flush(out: BTreeMap<NodeId, Vec<MstItem>>, ctx: &mut PulseCtx<'_, Vec<MstItem>>) {
        for (dst, mut items) in out {
            items.sort();
            ctx.send(dst, items);
        }
    }
}

impl SyncProgram for Boruvka {
    type Msg = Vec<MstItem>;
    type Output = Vec<(NodeId, NodeId)>;

    fn init(&mut self, ctx: &mut PulseCtx<'_, Self::Msg>) {
        let mut out = BTreeMap::new();
        self.start_phase(&mut out);
        self.progress(&mut out);
        Self::flush(out, ctx);
    }

    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, Self::Msg>, inbox: &[(NodeId, Self::Msg)], _: &[NodeId]) {
        for (from, items) in inbox {
            for it in items {
                self.absorb(*from, it.clone());
            }
        }
        let mut out = BTreeMap::new();
        self.progress(&mut out);
        Self::flush(out, ctx);
    }

    fn output(&self) -> Option<Self::Output> {
        (self.step == Step::Done).then(|| self.tree.iter().map(|&y| (self.id.min(y), self.id.max(y))).collect())
    }
}
