//! Convergecast/broadcast on cluster trees.
//!
//! `DoneNode` certifies "every member of each of my clusters is done", staged
//! so that stage `i + 1` treats "notified in stage `i`" as done. `AggNode`
//! folds an arbitrary value up each tree and broadcasts the total back down.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::hash::Hash;

use super::tree::{local_views, ClusterId, ClusterTree, TreeView};
use super::{kind, tag};
use crate::error::{violation, Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::sim::{AdversarySpec, Ctx, NodeProgram, RunMetrics, Session, Tag, Time};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DoneMsg {
    Up { cluster: ClusterId, stage: u32 },
    Down { cluster: ClusterId, stage: u32 },
}

impl DoneMsg {
    pub(crate) fn tag(&self) -> Tag {
        match *self {
            DoneMsg::Up { cluster, stage } | DoneMsg::Down { cluster, stage } => tag(kind::DONE, cluster, stage),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DoneNode {
    id: NodeId,
    views: Vec<TreeView>,
    stages: u32,
    /// Indexed by stage − 1.
    done: Vec<bool>,
    notified: Vec<bool>,
    reported: Vec<Vec<BTreeSet<NodeId>>>,
    sent_up: Vec<Vec<bool>>,
    confirmed: Vec<Vec<bool>>,
}

impl DoneNode {
    pub fn new(id: NodeId, views: Vec<TreeView>, stages: u32) -> Self {
        let s = stages as usize;
        let k = views.len();
        Self {
            id,
            views,
            stages,
            done: vec![false; s],
            notified: vec![false; s],
            reported: vec![vec![BTreeSet::new(); s]; k],
            sent_up: vec![vec![false; s]; k],
            confirmed: vec![vec![false; s]; k],
        }
    }

    pub fn is_notified(&self, stage: u32) -> bool {
        self.notified[stage as usize - 1]
    }

    /// Reports this node done with the process. Returns the stages it got notified of.
    pub fn mark_done(&mut self, out: &mut Vec<(NodeId, DoneMsg)>) -> Result<Vec<u32>> {
        if self.done[0] {
            return Err(violation(self.id, "reported done twice"));
        }
        let mut notes = Vec::new();
        self.set_done(1, out, &mut notes);
        Ok(notes)
    }

    fn set_done(&mut self, stage: u32, out: &mut Vec<(NodeId, DoneMsg)>, notes: &mut Vec<u32>) {
        self.done[stage as usize - 1] = true;
        for j in 0..self.views.len() {
            self.progress(j, stage, out, notes);
        }
        self.check_notified(stage, out, notes);
    }

    fn progress(&mut self, j: usize, stage: u32, out: &mut Vec<(NodeId, DoneMsg)>, notes: &mut Vec<u32>) {
        let s = stage as usize - 1;
        let v = &self.views[j];
        if self.sent_up[j][s] || (v.member && !self.done[s]) || self.reported[j][s].len() < v.children.len() {
            return;
        }
        self.sent_up[j][s] = true;
        let cluster = v.cluster;
        match v.parent {
            Some(p) => out.push((p, DoneMsg::Up { cluster, stage })),
            None => self.confirm(j, stage, out, notes),
        }
    }

    fn confirm(&mut self, j: usize, stage: u32, out: &mut Vec<(NodeId, DoneMsg)>, notes: &mut Vec<u32>) {
        let s = stage as usize - 1;
        self.confirmed[j][s] = true;
        let cluster = self.views[j].cluster;
        for &c in &self.views[j].children {
            out.push((c, DoneMsg::Down { cluster, stage }));
        }
        self.check_notified(stage, out, notes);
    }

    fn check_notified(&mut self, stage: u32, out: &mut Vec<(NodeId, DoneMsg)>, notes: &mut Vec<u32>) {
        let s = stage as usize - 1;
        if self.notified[s] || !self.done[s] {
            return;
        }
        if self.views.iter().enumerate().any(|(j, v)| v.member && !self.confirmed[j][s]) {
            return;
        }
        self.notified[s] = true;
        notes.push(stage);
        if stage < self.stages {
            self.set_done(stage + 1, out, notes);
        }
    }

    pub fn on_msg(&mut self, from: NodeId, msg: DoneMsg, out: &mut Vec<(NodeId, DoneMsg)>) -> Result<Vec<u32>> {
        let mut notes = Vec::new();
        let (cluster, stage) = match msg {
            DoneMsg::Up { cluster, stage } | DoneMsg::Down { cluster, stage } => (cluster, stage),
        };
        if stage == 0 || stage > self.stages {
            return Err(violation(self.id, format!("done stage {stage} out of range")));
        }
        let j = self
            .views
            .iter()
            .position(|v| v.cluster == cluster)
            .ok_or_else(|| violation(self.id, format!("not in cluster {cluster}")))?;
        match msg {
            DoneMsg::Up { .. } => {
                if !self.reported[j][stage as usize - 1].insert(from) {
                    return Err(violation(self.id, format!("child {from} reported twice")));
                }
                self.progress(j, stage, out, &mut notes);
            }
            DoneMsg::Down { .. } => self.confirm(j, stage, out, &mut notes),
        }
        Ok(notes)
    }
}

/// When a node is done with the process being certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoneSource {
    AtStart,
    At(Time),
}

#[derive(Clone, Debug)]
struct DoneCast {
    node: DoneNode,
    source: DoneSource,
    done_at: Option<Time>,
    notified_at: Vec<Option<Time>>,
    error: Option<String>,
}

impl DoneCast {
    fn apply(&mut self, ctx: &mut Ctx<'_, DoneMsg>, out: Vec<(NodeId, DoneMsg)>, notes: Result<Vec<u32>>) {
        for (dst, m) in out {
            let stage = match m {
                DoneMsg::Up { stage, .. } | DoneMsg::Down { stage, .. } => stage,
            };
            ctx.send(dst, m, m.tag(), stage);
        }
        match notes {
            Ok(notes) => {
                for s in notes {
                    self.notified_at[s as usize - 1] = Some(ctx.now());
                    if s == self.node.stages {
                        ctx.output();
                    }
                }
            }
            Err(e) => self.error = Some(e.to_string()),
        }
    }

    fn fire(&mut self, ctx: &mut Ctx<'_, DoneMsg>) {
        self.done_at = Some(ctx.now());
        let mut out = Vec::new();
        let notes = self.node.mark_done(&mut out);
        self.apply(ctx, out, notes);
    }
}

impl NodeProgram for DoneCast {
    type Msg = DoneMsg;

    fn on_start(&mut self, ctx: &mut Ctx<'_, DoneMsg>) {
        match self.source {
            DoneSource::AtStart => self.fire(ctx),
            DoneSource::At(t) => ctx.set_timer(t, 0),
        }
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, DoneMsg>, from: NodeId, msg: DoneMsg, _: Tag) {
        let mut out = Vec::new();
        let notes = self.node.on_msg(from, msg, &mut out);
        self.apply(ctx, out, notes);
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, DoneMsg>, _: u64) {
        self.fire(ctx);
    }
}

#[derive(Clone, Debug)]
pub struct DoneReport {
    pub done_at: Vec<Time>,
    /// `notified_at[v][i]`: when `v` was notified in stage `i + 1`.
    pub notified_at: Vec<Vec<Time>>,
    pub metrics: RunMetrics,
}

pub fn done_convergecast(
    g: &NetworkGraph,
    trees: &[ClusterTree],
    sources: &[DoneSource],
    adversary: &AdversarySpec,
) -> Result<DoneReport> {
    done_convergecast_extended(g, trees, 1, sources, adversary)
}

pub fn done_convergecast_extended(
    g: &NetworkGraph,
    trees: &[ClusterTree],
    stages: u32,
    sources: &[DoneSource],
    adversary: &AdversarySpec,
) -> Result<DoneReport> {
    if stages == 0 {
        return Err(Error::Usage("the extended convergecast needs at least one stage".into()));
    }
    let views = local_views(g.n(), trees);
    let mut progs: Vec<DoneCast> = views
        .into_iter()
        .enumerate()
        .map(|(v, vs)| DoneCast {
            node: DoneNode::new(v as NodeId, vs, stages),
            source: sources[v],
            done_at: None,
            notified_at: vec![None; stages as usize],
            error: None,
        })
        .collect();
    let mut s = Session::new(g, adversary);
    s.set_category("done-convergecast");
    s.run(&mut progs)?;
    if let Some((v, e)) = progs.iter().enumerate().find_map(|(v, p)| p.error.clone().map(|e| (v, e))) {
        return Err(violation(v as NodeId, e));
    }
    let notified_at = progs
        .iter()
        .enumerate()
        .map(|(v, p)| {
            p.notified_at
                .iter()
                .map(|t| t.ok_or_else(|| violation(v as NodeId, "never notified")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DoneReport { done_at: progs.iter().map(|p| p.done_at.unwrap()).collect(), notified_at, metrics: s.metrics() })
}

/// Commutative, associative summary folded up a tree.
pub trait Aggregate: Clone + Debug + Hash {
    fn combine(&mut self, other: &Self);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Sum(pub u64);
impl Aggregate for Sum {
    fn combine(&mut self, o: &Self) {
        self.0 += o.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct All(pub bool);
impl Aggregate for All {
    fn combine(&mut self, o: &Self) {
        self.0 &= o.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Any(pub bool);
impl Aggregate for Any {
    fn combine(&mut self, o: &Self) {
        self.0 |= o.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Min(pub u64);
impl Aggregate for Min {
    fn combine(&mut self, o: &Self) {
        self.0 = self.0.min(o.0);
    }
}

impl<A: Aggregate, B: Aggregate> Aggregate for (A, B) {
    fn combine(&mut self, o: &Self) {
        self.0.combine(&o.0);
        self.1.combine(&o.1);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AggMsg<A> {
    Up { cluster: ClusterId, value: A },
    Down { cluster: ClusterId, value: A },
}

impl<A> AggMsg<A> {
    fn cluster(&self) -> ClusterId {
        match self {
            AggMsg::Up { cluster, .. } | AggMsg::Down { cluster, .. } => *cluster,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AggNode<A> {
    id: NodeId,
    views: Vec<TreeView>,
    acc: Vec<Option<A>>,
    pending: Vec<Vec<A>>,
    got: Vec<BTreeSet<NodeId>>,
    sent: Vec<bool>,
    pub results: BTreeMap<ClusterId, A>,
}

impl<A: Aggregate> AggNode<A> {
    pub fn new(id: NodeId, views: Vec<TreeView>) -> Self {
        let k = views.len();
        Self {
            id,
            views,
            acc: vec![None; k],
            pending: vec![Vec::new(); k],
            got: vec![BTreeSet::new(); k],
            sent: vec![false; k],
            results: BTreeMap::new(),
        }
    }

    pub fn views(&self) -> &[TreeView] {
        &self.views
    }

    pub fn done(&self) -> bool {
        self.results.len() == self.views.len()
    }

    pub fn set_input(&mut self, j: usize, value: A, out: &mut Vec<(NodeId, AggMsg<A>)>) {
        let mut acc = value;
        for p in self.pending[j].drain(..) {
            acc.combine(&p);
        }
        self.acc[j] = Some(acc);
        self.progress(j, out);
    }

    fn progress(&mut self, j: usize, out: &mut Vec<(NodeId, AggMsg<A>)>) {
        if self.sent[j] || self.got[j].len() < self.views[j].children.len() {
            return;
        }
        let Some(value) = self.acc[j].clone() else { return };
        self.sent[j] = true;
        let cluster = self.views[j].cluster;
        match self.views[j].parent {
            Some(p) => out.push((p, AggMsg::Up { cluster, value })),
            None => self.deliver(j, value, out),
        }
    }

    fn deliver(&mut self, j: usize, value: A, out: &mut Vec<(NodeId, AggMsg<A>)>) {
        let cluster = self.views[j].cluster;
        for &c in &self.views[j].children {
            out.push((c, AggMsg::Down { cluster, value: value.clone() }));
        }
        self.results.insert(cluster, value);
    }

    pub fn on_msg(&mut self, from: NodeId, msg: AggMsg<A>, out: &mut Vec<(NodeId, AggMsg<A>)>) -> Result<()> {
        let cluster = msg.cluster();
        let j = self
            .views
            .iter()
            .position(|v| v.cluster == cluster)
            .ok_or_else(|| violation(self.id, format!("aggregate for foreign cluster {cluster}")))?;
        match msg {
            AggMsg::Up { value, .. } => {
                if !self.got[j].insert(from) {
                    return Err(violation(self.id, "duplicate aggregate report"));
                }
                match &mut self.acc[j] {
                    Some(a) => a.combine(&value),
                    None => self.pending[j].push(value),
                }
                self.progress(j, out);
            }
            AggMsg::Down { value, .. } => self.deliver(j, value, out),
        }
        Ok(())
    }
}

fn send_agg<A: Aggregate>(ctx: &mut Ctx<'_, AggMsg<A>>, out: Vec<(NodeId, AggMsg<A>)>, k: u8) {
    for (dst, m) in out {
        let t = tag(k, m.cluster(), 0);
        ctx.send(dst, m, t, 0);
    }
}

struct TreeAgg<A> {
    node: AggNode<A>,
    inputs: Vec<A>,
    error: Option<String>,
}

impl<A: Aggregate> NodeProgram for TreeAgg<A> {
    type Msg = AggMsg<A>;

    fn on_start(&mut self, ctx: &mut Ctx<'_, AggMsg<A>>) {
        let mut out = Vec::new();
        for (j, x) in std::mem::take(&mut self.inputs).into_iter().enumerate() {
            self.node.set_input(j, x, &mut out);
        }
        send_agg(ctx, out, kind::AGG);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, AggMsg<A>>, from: NodeId, msg: AggMsg<A>, _: Tag) {
        let mut out = Vec::new();
        if let Err(e) = self.node.on_msg(from, msg, &mut out) {
            self.error = Some(e.to_string());
        }
        send_agg(ctx, out, kind::AGG);
    }
}

/// Folds `input(v, view)` over every tree inside `session`; returns each
/// node's map from cluster to the cluster-wide total.
pub fn tree_aggregate<A: Aggregate>(
    session: &mut Session<'_>,
    trees: &[ClusterTree],
    mut input: impl FnMut(NodeId, &TreeView) -> A,
) -> Result<Vec<BTreeMap<ClusterId, A>>> {
    let n = session.graph().n();
    let mut progs: Vec<TreeAgg<A>> = local_views(n, trees)
        .into_iter()
        .enumerate()
        .map(|(v, views)| {
            let inputs = views.iter().map(|w| input(v as NodeId, w)).collect();
            TreeAgg { node: AggNode::new(v as NodeId, views), inputs, error: None }
        })
        .collect();
    session.run(&mut progs)?;
    progs
        .into_iter()
        .enumerate()
        .map(|(v, p)| match p.error {
            Some(e) => Err(violation(v as NodeId, e)),
            None if !p.node.done() => Err(violation(v as NodeId, "aggregate never completed")),
            None => Ok(p.node.results),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SpanMsg {
    Members(Vec<ClusterId>),
    Agg(AggMsg<All>),
}

/// Decides for every cluster whether it contains every node of the (masked) graph:
/// neighbours swap membership lists, then each member reports whether all its
/// neighbours share the cluster.
struct SpanCheck {
    node: AggNode<All>,
    mask_nbrs: Vec<NodeId>,
    heard: BTreeMap<NodeId, Vec<ClusterId>>,
    started: bool,
    error: Option<String>,
}

impl SpanCheck {
    fn maybe_start(&mut self, ctx: &mut Ctx<'_, SpanMsg>) {
        if self.started || self.heard.len() < self.mask_nbrs.len() {
            return;
        }
        self.started = true;
        let mut out = Vec::new();
        let views = self.node.views().to_vec();
        for (j, v) in views.iter().enumerate() {
            let ok = !v.member || self.heard.values().all(|l| l.binary_search(&v.cluster).is_ok());
            self.node.set_input(j, All(ok), &mut out);
        }
        self.flush(ctx, out);
    }

    fn flush(&mut self, ctx: &mut Ctx<'_, SpanMsg>, out: Vec<(NodeId, AggMsg<All>)>) {
        for (dst, m) in out {
            let t = tag(kind::SPAN, m.cluster(), 1);
            ctx.send(dst, SpanMsg::Agg(m), t, 1);
        }
    }
}

impl NodeProgram for SpanCheck {
    type Msg = SpanMsg;

    fn on_start(&mut self, ctx: &mut Ctx<'_, SpanMsg>) {
        let mine: Vec<ClusterId> = self.node.views().iter().filter(|v| v.member).map(|v| v.cluster).collect();
        for &u in &self.mask_nbrs {
            ctx.send(u, SpanMsg::Members(mine.clone()), tag(kind::SPAN, 0, 0), 0);
        }
        self.maybe_start(ctx);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, SpanMsg>, from: NodeId, msg: SpanMsg, _: Tag) {
        match msg {
            SpanMsg::Members(list) => {
                self.heard.insert(from, list);
                self.maybe_start(ctx);
            }
            SpanMsg::Agg(m) => {
                let mut out = Vec::new();
                if let Err(e) = self.node.on_msg(from, m, &mut out) {
                    self.error = Some(e.to_string());
                }
                self.flush(ctx, out);
            }
        }
    }
}

/// Per node, the clusters it belongs to that contain all nodes of `mask`.
pub fn spanning_check(session: &mut Session<'_>, trees: &[ClusterTree], mask: &[bool]) -> Result<Vec<Vec<ClusterId>>> {
    let g = session.graph();
    let mut progs: Vec<SpanCheck> = local_views(g.n(), trees)
        .into_iter()
        .enumerate()
        .map(|(v, views)| SpanCheck {
            node: AggNode::new(v as NodeId, views),
            mask_nbrs: if mask[v] { g.neighbors(v as NodeId).iter().copied().filter(|&u| mask[u as usize]).collect() } else { vec![] },
            heard: BTreeMap::new(),
            started: false,
            error: None,
        })
        .collect();
    session.run(&mut progs)?;
    progs
        .into_iter()
        .enumerate()
        .map(|(v, p)| match p.error {
            Some(e) => Err(violation(v as NodeId, e)),
            None => Ok(p.node.results.iter().filter(|(_, a)| a.0).map(|(&c, _)| c).collect()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, multi_source_distances, Family, GraphSpec};
    use crate::sim::TICKS;

    fn path(n: usize) -> NetworkGraph {
        generate(&GraphSpec::new(Family::Path, n, 0)).unwrap()
    }

    /// Windows `[a, a+w)` on a path, each rooted at its left end, members = window.
    fn windows(n: u32, w: u32, step: u32) -> Vec<ClusterTree> {
        let mut out = Vec::new();
        let mut a = 0;
        loop {
            let b = (a + w).min(n);
            out.push(ClusterTree {
                id: out.len() as ClusterId,
                root: a,
                parent: (a + 1..b).map(|v| (v, v - 1)).collect(),
                members: (a..b).collect(),
            });
            if b == n {
                break;
            }
            a += step;
        }
        out
    }

    #[test]
    fn star_cluster_notifies_after_one_round_trip() {
        let g = generate(&GraphSpec::new(Family::Star, 5, 0)).unwrap();
        let t = ClusterTree { id: 0, root: 0, parent: (1..5).map(|v| (v, 0)).collect(), members: (0..5).collect() };
        let r = done_convergecast(&g, &[t], &[DoneSource::AtStart; 5], &AdversarySpec::MaxDelay).unwrap();
        assert_eq!(r.notified_at[0][0], TICKS);
        assert!(r.notified_at[1..].iter().all(|x| x[0] == 2 * TICKS));
    }

    #[test]
    fn singleton_clusters_notify_immediately() {
        let g = path(4);
        let trees: Vec<_> = (0..4).map(|v| ClusterTree::singleton(v, v)).collect();
        let src = [DoneSource::AtStart, DoneSource::At(3 * TICKS), DoneSource::AtStart, DoneSource::At(TICKS)];
        let r = done_convergecast(&g, &trees, &src, &AdversarySpec::MaxDelay).unwrap();
        for v in 0..4 {
            assert_eq!(r.notified_at[v][0], r.done_at[v]);
        }
        assert_eq!(r.metrics.messages_total, 0);
    }

    fn check_neighbourhood(g: &NetworkGraph, r: &DoneReport, radius: u32, stage: usize) {
        for v in 0..g.n() {
            let dist = multi_source_distances(g, &[v as NodeId], None);
            for (u, d) in dist.iter().enumerate() {
                if d.unwrap() <= radius {
                    assert!(r.notified_at[v][stage] >= r.done_at[u], "{v} notified before {u} done");
                }
            }
        }
    }

    #[test]
    fn path_nine_middle_last() {
        let g = path(9);
        // Windows of 5 sliding by 2 contain every 2-ball.
        let trees = windows(9, 5, 2);
        let mut src = [DoneSource::AtStart; 9];
        src[4] = DoneSource::At(20 * TICKS);
        for adv in AdversarySpec::matrix(3) {
            let r = done_convergecast(&g, &trees, &src, &adv).unwrap();
            check_neighbourhood(&g, &r, 2, 0);
            assert!(r.notified_at[2][0] >= 20 * TICKS);
            assert!(r.notified_at[6][0] >= 20 * TICKS);
        }
    }

    #[test]
    fn extended_certifies_multiples() {
        let g = path(17);
        let trees = windows(17, 5, 2);
        let mut src = [DoneSource::AtStart; 17];
        src[8] = DoneSource::At(30 * TICKS);
        let mut counts = Vec::new();
        for l in 1..=3 {
            let r = done_convergecast_extended(&g, &trees, l, &src, &AdversarySpec::UniformRandom { seed: l as u64 }).unwrap();
            check_neighbourhood(&g, &r, 2 * l, l as usize - 1);
            counts.push(r.metrics.messages_total);
        }
        assert_eq!(counts[1], 2 * counts[0]);
        assert_eq!(counts[2], 3 * counts[0]);
        assert!(done_convergecast_extended(&g, &trees, 0, &src, &AdversarySpec::MaxDelay).is_err());
    }

    #[test]
    fn double_done_is_rejected() {
        let mut d = DoneNode::new(0, vec![], 1);
        let mut out = Vec::new();
        d.mark_done(&mut out).unwrap();
        assert!(d.mark_done(&mut out).is_err());
    }

    #[test]
    fn aggregates_and_span() {
        let g = path(6);
        let trees = windows(6, 4, 2);
        let mut s = Session::new(&g, &AdversarySpec::UniformRandom { seed: 1 });
        let sums = tree_aggregate(&mut s, &trees, |v, w| Sum(if w.member { v as u64 } else { 0 })).unwrap();
        assert_eq!(sums[0][&0], Sum(6));
        assert_eq!(sums[3][&1], Sum(2 + 3 + 4 + 5));
        let span = spanning_check(&mut s, &trees, &[true; 6]).unwrap();
        assert!(span.iter().all(Vec::is_empty));
        let whole = windows(6, 6, 6);
        let span = spanning_check(&mut s, &whole, &[true; 6]).unwrap();
        assert!(span.iter().all(|c| c == &vec![0]));
        // Restricted to the first four nodes, cluster 0 of the windows spans.
        let mask = [true, true, true, true, false, false];
        let span = spanning_check(&mut s, &trees, &mask).unwrap();
        assert_eq!(span[0], vec![0]);
    }
}
