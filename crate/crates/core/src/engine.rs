//! Pulse-gated execution of event-driven programs over layered covers.
//!
//! A virtual node `(v, q)` sends the pulse-`q` messages of `v`; its parent is
//! the first pulse-`(q − 1)` sender `v` heard from, or `(v, q − 1)` itself.
//! Safety reports climb this execution tree, nodes of pulse `prev²(p)`
//! register on cover clusters once they are `prev(p)`-safe, and `Go(p)` comes
//! back down only after every registrant of the cluster is `p`-safe. A virtual
//! node runs its handler only once `Go(q)` has arrived.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;
use std::rc::Rc;

use serde::Serialize;

use crate::cluster::convergecast::{DoneMsg, DoneNode};
use crate::cluster::{kind, local_views, tag, ClusterId, RegEvent, RegMsg, RegNode, TreeView};
use crate::cover::LayeredCover;
use crate::error::{violation, Error, Result};
use crate::graph::NodeId;
use crate::pulse::{lvl, prev, prev2, Pulse};
use crate::sim::{Ctx, NodeProgram, Stage, Tag};

/// The program driven by the engine, seen one virtual node at a time.
pub(crate) trait App {
    type Payload: Clone + Debug + Hash;
    /// General programs chain `(v, q)` to `(v, q + 1)` whenever `v` sends at `q`.
    const SELF_CHILD: bool;

    /// `Some` makes this node an initiator with these pulse-0 sends.
    fn init(&mut self, v: NodeId, nbrs: &[NodeId]) -> Option<Vec<(NodeId, Self::Payload)>>;

    /// Whether a pulse-`(q − 1)` message may create `(v, q)`; `busy` says `v` already runs some virtual node.
    fn admits(&self, busy: bool) -> bool;

    /// Runs the handler of `(v, q)`; returns its pulse-`q` sends and whether the output changed.
    fn release(
        &mut self,
        v: NodeId,
        q: Pulse,
        nbrs: &[NodeId],
        inbox: &[(NodeId, Self::Payload)],
        delivered: &[NodeId],
    ) -> (Vec<(NodeId, Self::Payload)>, bool);

    /// Output is produced as soon as a virtual node is created (BFS joins).
    fn output_on_join(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SrcMsg {
    RegUp,
    Confirm,
    DeregUp,
    Go,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EngineMsg<P> {
    App { pulse: Pulse, payload: P },
    Answer { pulse: Pulse, accepted: bool },
    /// `to` is the receiving virtual node's pulse.
    Safe { to: Pulse, p: Pulse, empty: bool },
    Go { to: Pulse, p: Pulse },
    Reg { layer: u8, cluster: ClusterId, p: Pulse, msg: RegMsg },
    Src { layer: u8, cluster: ClusterId, p: Pulse, msg: SrcMsg },
    Done(DoneMsg),
}

fn cluster_key(layer: u8, cluster: ClusterId) -> u32 {
    ((layer as u32) << 22) | (cluster & 0x3f_ffff)
}

impl<P> EngineMsg<P> {
    fn route(&self, final_stage: Stage) -> (Tag, Stage) {
        match *self {
            EngineMsg::App { pulse, .. } => (tag(kind::APP, 0, pulse), pulse + 1),
            EngineMsg::Answer { pulse, .. } => (tag(kind::ANSWER, 0, pulse), pulse + 1),
            EngineMsg::Safe { p, .. } => (tag(kind::SAFE, 0, p), p),
            EngineMsg::Go { p, .. } => (tag(kind::GO, 0, p), p),
            EngineMsg::Reg { layer, cluster, p, .. } => (tag(kind::REG, cluster_key(layer, cluster), p), p),
            EngineMsg::Src { layer, cluster, p, .. } => (tag(kind::SRC, cluster_key(layer, cluster), p), p),
            EngineMsg::Done(m) => (m.tag(), final_stage),
        }
    }
}

/// Category names for `Session::set_categorizer`.
pub fn categorize(t: Tag) -> &'static str {
    match (t >> 60) as u8 {
        kind::SAFE | kind::GO => "safety",
        kind::REG | kind::SRC => "register",
        _ => categorize_detail(t),
    }
}

/// Engine traffic spent on building covers.
pub fn categorize_cover(t: Tag) -> &'static str {
    match (t >> 60) as u8 {
        kind::APP | kind::ANSWER => "cover-bfs",
        kind::SAFE | kind::GO => "cover-safety",
        kind::REG | kind::SRC => "cover-register",
        _ => "cover-other",
    }
}

fn categorize_detail(t: Tag) -> &'static str {
    match (t >> 60) as u8 {
        kind::APP => "app",
        kind::ANSWER => "answer",
        kind::DONE => "check",
        kind::AGG | kind::SPAN => "aggregate",
        kind::ALPHA_SAFE => "alpha-safe",
        kind::QUERY => "query",
        _ => "other",
    }
}

/// Cover views shared by all nodes of one engine run.
pub(crate) struct Layout {
    /// `views[j][v]`: node `v`'s trees in the `2^j` layer, by cluster id.
    views: BTreeMap<u8, Vec<Vec<TreeView>>>,
    /// Layer used by registrations of each pulse level.
    level_layer: Vec<u8>,
    check: Option<u8>,
    pub(crate) mask: Vec<bool>,
}

impl Layout {
    /// Views for registrations of every pulse up to `max_pulse` and, if asked,
    /// a checking layer of radius at least `check_radius`.
    pub(crate) fn new(
        n: usize,
        cover: &LayeredCover,
        max_pulse: Pulse,
        check_radius: Option<u64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let pick = |radius: u64| -> Result<u8> {
            cover
                .layers
                .iter()
                .find(|(_, c)| c.radius >= radius)
                .map(|(&j, _)| j as u8)
                .or(cover.spanning.map(|j| j as u8))
                .ok_or(Error::MissingCoverLayer(radius))
        };
        let top = if max_pulse == 0 { 0 } else { 31 - max_pulse.leading_zeros() };
        let mut level_layer = Vec::new();
        if max_pulse > 0 {
            for l in 0..=top {
                level_layer.push(pick(1u64 << (l + 5))?);
            }
        }
        let check = check_radius.map(pick).transpose()?;
        let mut views = BTreeMap::new();
        for &j in level_layer.iter().chain(check.iter()) {
            views.entry(j).or_insert_with(|| local_views(n, &cover.layers[&(j as u32)].clusters));
        }
        Ok(Self { views, level_layer, check, mask })
    }

    fn layer_of(&self, p: Pulse) -> u8 {
        self.level_layer[lvl(p) as usize]
    }

    fn views(&self, layer: u8, v: NodeId) -> &[TreeView] {
        &self.views[&layer][v as usize]
    }

    fn view(&self, layer: u8, v: NodeId, cluster: ClusterId) -> Option<&TreeView> {
        let vs = self.views(layer, v);
        vs.binary_search_by_key(&cluster, |w| w.cluster).ok().map(|i| &vs[i])
    }
}

/// Counters kept by every node; summed by the drivers.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EngineStats {
    /// Registering virtual nodes per pulse level.
    pub registrations_by_level: BTreeMap<u32, u64>,
    pub app_messages: u64,
    pub safe_messages: u64,
    pub go_messages: u64,
    /// Largest number of distinct pulses whose Safe/Go messages crossed one edge.
    pub max_pulses_per_edge: usize,
    pub ordering_violations: u64,
}

impl EngineStats {
    pub fn absorb(&mut self, o: &EngineStats) {
        for (l, c) in &o.registrations_by_level {
            *self.registrations_by_level.entry(*l).or_default() += c;
        }
        self.app_messages += o.app_messages;
        self.safe_messages += o.safe_messages;
        self.go_messages += o.go_messages;
        self.max_pulses_per_edge = self.max_pulses_per_edge.max(o.max_pulses_per_edge);
        self.ordering_violations += o.ordering_violations;
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Vnode {
    pub(crate) parent: Option<NodeId>,
    released: bool,
    sent: Option<Vec<NodeId>>,
    answers: BTreeMap<NodeId, bool>,
    self_child: bool,
    reports: BTreeMap<Pulse, BTreeMap<NodeId, bool>>,
    /// Known `p`-safety, with `true` meaning `p`-empty.
    status: BTreeMap<Pulse, bool>,
    reported: BTreeSet<Pulse>,
    go: BTreeSet<Pulse>,
}

impl Vnode {
    fn children_known(&self) -> bool {
        self.released && self.sent.as_ref().is_some_and(|s| s.len() == self.answers.len())
    }

    fn children(&self, me: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.answers.iter().filter(|(_, &a)| a).map(|(&c, _)| c).chain(self.self_child.then_some(me))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Duty {
    Registering(usize),
    Registered,
    Deregistering(usize),
    Free,
}

#[derive(Clone, Debug, Default)]
struct SrcCast {
    reg_from: BTreeSet<NodeId>,
    reg_sent: bool,
    local_dereg: bool,
    dereg_from: BTreeSet<NodeId>,
    dereg_sent: bool,
}

pub(crate) struct EngineNode<A: App> {
    id: NodeId,
    layout: Rc<Layout>,
    pub(crate) app: A,
    /// Highest pulse a virtual node may be released at.
    max_release: Pulse,
    /// A pulse whose safety is also reported all the way to the sources.
    final_pulse: Option<Pulse>,
    /// Holds back deregistrations while late registrations settle.
    pub(crate) hold: bool,
    started: bool,
    pub(crate) vnodes: BTreeMap<Pulse, Vnode>,
    pub(crate) inbox: BTreeMap<Pulse, Vec<(NodeId, A::Payload)>>,
    stash: Option<Vec<(NodeId, A::Payload)>>,
    reg: BTreeMap<(u8, ClusterId, Pulse), RegNode>,
    duties: BTreeMap<Pulse, Duty>,
    src: BTreeMap<(u8, ClusterId, Pulse), SrcCast>,
    src_started: Pulse,
    src_confirm_left: usize,
    src_go_left: BTreeMap<Pulse, usize>,
    src_freed: BTreeSet<Pulse>,
    done: Option<DoneNode>,
    done_marked: bool,
    pub(crate) notified: bool,
    max_released: Option<Pulse>,
    last_recv: Pulse,
    edge_pulses: BTreeMap<NodeId, BTreeSet<Pulse>>,
    pub(crate) stats: EngineStats,
    pub(crate) error: Option<String>,
    local: VecDeque<EngineMsg<A::Payload>>,
}

type Out<P> = Vec<(NodeId, EngineMsg<P>)>;

impl<A: App> EngineNode<A> {
    pub(crate) fn new(id: NodeId, layout: Rc<Layout>, app: A, max_release: Pulse, final_pulse: Option<Pulse>) -> Self {
        let done = layout.check.map(|j| DoneNode::new(id, layout.views(j, id).to_vec(), 1));
        Self {
            id,
            layout,
            app,
            max_release,
            final_pulse,
            hold: false,
            started: false,
            vnodes: BTreeMap::new(),
            inbox: BTreeMap::new(),
            stash: None,
            reg: BTreeMap::new(),
            duties: BTreeMap::new(),
            src: BTreeMap::new(),
            src_started: 0,
            src_confirm_left: 0,
            src_go_left: BTreeMap::new(),
            src_freed: BTreeSet::new(),
            done,
            done_marked: false,
            notified: false,
            max_released: None,
            last_recv: 0,
            edge_pulses: BTreeMap::new(),
            stats: EngineStats::default(),
            error: None,
            local: VecDeque::new(),
        }
    }

    /// Raises the release limit; the next run resumes from the current state.
    pub(crate) fn extend(&mut self, layout: Rc<Layout>, max_release: Pulse) {
        debug_assert!(max_release >= self.max_release);
        self.layout = layout;
        self.max_release = max_release;
    }

    pub(crate) fn is_source(&self) -> bool {
        self.vnodes.contains_key(&0)
    }

    /// Pulse of the first virtual node, i.e. the BFS distance.
    pub(crate) fn first_pulse(&self) -> Option<Pulse> {
        self.vnodes.keys().next().copied()
    }

    /// A virtual node exists beyond the release limit.
    pub(crate) fn pending(&self) -> bool {
        self.vnodes.keys().next_back().is_some_and(|&q| q > self.max_release)
    }

    fn cap(&self) -> Pulse {
        (self.max_release + 1).max(self.final_pulse.unwrap_or(0))
    }

    fn fail(&mut self, e: Error) {
        if self.error.is_none() {
            self.error = Some(e.to_string());
        }
    }

    fn tracks(&self, q: Pulse, p: Pulse) -> bool {
        p >= q && p >= 1 && p <= self.cap() && (prev2(p) <= q || Some(p) == self.final_pulse)
    }

    fn reports_up(&self, q: Pulse, p: Pulse) -> bool {
        q >= 1 && self.tracks(q, p) && (prev2(p) < q || Some(p) == self.final_pulse)
    }

    /// Pulses whose safety `(v, q)` follows.
    fn tracked(&self, q: Pulse) -> Vec<Pulse> {
        let cap = self.cap();
        let mut out = Vec::new();
        for l in 0..32u32 {
            let step = 1u64 << l;
            if step > cap as u64 {
                break;
            }
            let hi = (q as u64 + 9 * step).min(cap as u64);
            let mut p = (q as u64).div_ceil(step).max(1) * step;
            if (p >> l).is_multiple_of(2) {
                p += step;
            }
            while p <= hi {
                if self.tracks(q, p as Pulse) {
                    out.push(p as Pulse);
                }
                p += 2 * step;
            }
        }
        if let Some(f) = self.final_pulse {
            if f >= q && f <= cap && !out.contains(&f) {
                out.push(f);
            }
        }
        out.sort_unstable();
        out
    }

    fn src_pulses(&self, from: Pulse, to: Pulse) -> Vec<Pulse> {
        (from.max(1)..=to).filter(|&p| prev2(p) == 0).collect()
    }

    fn start(&mut self, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        self.started = true;
        let v = self.id;
        if self.layout.mask[v as usize] {
            if let Some(sends) = self.app.init(v, ctx.neighbors()) {
                self.stash = Some(sends);
                self.vnodes.insert(0, Vnode::default());
                if self.app.output_on_join() {
                    ctx.output();
                }
            }
        }
        let pulses = self.src_pulses(1, self.max_release);
        self.src_started = self.max_release;
        if self.is_source() {
            for &p in &pulses {
                let j = self.layout.layer_of(p);
                let members = self.layout.views(j, v).iter().filter(|w| w.member).count();
                self.src_confirm_left += members;
                self.src_go_left.insert(p, members);
            }
        }
        for p in pulses {
            self.src_begin(p, out);
        }
        if self.is_source() && self.src_confirm_left == 0 {
            self.release(0, ctx, out);
        }
        if let Some(d) = &mut self.done {
            if !self.vnodes.contains_key(&0) {
                self.done_marked = true;
                let mut dout = Vec::new();
                let r = d.mark_done(&mut dout);
                out.extend(dout.into_iter().map(|(w, m)| (w, EngineMsg::Done(m))));
                self.on_notes(r, ctx);
            }
        }
    }

    fn resume(&mut self, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let fresh = self.src_pulses(self.src_started + 1, self.max_release);
        self.src_started = self.src_started.max(self.max_release);
        if self.is_source() {
            for &p in &fresh {
                let j = self.layout.layer_of(p);
                let members = self.layout.views(j, self.id).iter().filter(|w| w.member).count();
                self.src_go_left.insert(p, members);
            }
        }
        for p in fresh {
            self.src_begin(p, out);
        }
        let qs: Vec<Pulse> = self.vnodes.keys().copied().collect();
        for q in qs {
            self.eval(q, ctx, out);
        }
    }

    fn on_notes(&mut self, r: Result<Vec<u32>>, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>) {
        match r {
            Ok(notes) if !notes.is_empty() => {
                self.notified = true;
                ctx.output();
            }
            Ok(_) => {}
            Err(e) => self.fail(e),
        }
    }

    fn src_begin(&mut self, p: Pulse, out: &mut Out<A::Payload>) {
        let j = self.layout.layer_of(p);
        let layout = self.layout.clone();
        let src = self.is_source();
        for w in layout.views(j, self.id) {
            let st = self.src.entry((j, w.cluster, p)).or_default();
            st.local_dereg = !(src && w.member);
            self.src_progress(j, w.cluster, p, out);
        }
    }

    fn src_progress(&mut self, j: u8, cluster: ClusterId, p: Pulse, out: &mut Out<A::Payload>) {
        let layout = self.layout.clone();
        let w = layout.view(j, self.id, cluster).expect("view of own cluster");
        let st = self.src.get_mut(&(j, cluster, p)).unwrap();
        let all = |s: &BTreeSet<NodeId>| s.len() == w.children.len();
        let mut confirm = false;
        let mut go = false;
        if !st.reg_sent && all(&st.reg_from) {
            st.reg_sent = true;
            match w.parent {
                Some(u) => out.push((u, EngineMsg::Src { layer: j, cluster, p, msg: SrcMsg::RegUp })),
                None => confirm = true,
            }
        }
        if st.reg_sent && !st.dereg_sent && st.local_dereg && all(&st.dereg_from) {
            st.dereg_sent = true;
            match w.parent {
                Some(u) => out.push((u, EngineMsg::Src { layer: j, cluster, p, msg: SrcMsg::DeregUp })),
                None => go = true,
            }
        }
        if confirm {
            self.src_down(j, w, p, SrcMsg::Confirm, out);
        }
        if go {
            self.src_down(j, w, p, SrcMsg::Go, out);
        }
    }

    fn src_down(&mut self, j: u8, w: &TreeView, p: Pulse, msg: SrcMsg, out: &mut Out<A::Payload>) {
        for &c in &w.children {
            out.push((c, EngineMsg::Src { layer: j, cluster: w.cluster, p, msg }));
        }
        if !(w.member && self.is_source()) {
            return;
        }
        match msg {
            SrcMsg::Confirm => self.src_confirm_left = self.src_confirm_left.saturating_sub(1),
            SrcMsg::Go => {
                let left = self.src_go_left.get_mut(&p).unwrap();
                *left -= 1;
            }
            _ => unreachable!(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn on_src(
        &mut self,
        from: NodeId,
        j: u8,
        cluster: ClusterId,
        p: Pulse,
        msg: SrcMsg,
        ctx: &mut Ctx<'_, EngineMsg<A::Payload>>,
        out: &mut Out<A::Payload>,
    ) {
        let layout = self.layout.clone();
        let Some(w) = layout.view(j, self.id, cluster) else {
            return self.fail(violation(self.id, format!("source registration for foreign cluster {cluster}")));
        };
        if !self.src.contains_key(&(j, cluster, p)) {
            return self.fail(violation(self.id, format!("source registration for untracked pulse {p}")));
        }
        match msg {
            SrcMsg::RegUp | SrcMsg::DeregUp => {
                let st = self.src.get_mut(&(j, cluster, p)).unwrap();
                let set = if msg == SrcMsg::RegUp { &mut st.reg_from } else { &mut st.dereg_from };
                if !w.children.contains(&from) || !set.insert(from) {
                    return self.fail(violation(self.id, format!("stray {msg:?} from {from}")));
                }
                self.src_progress(j, cluster, p, out);
            }
            SrcMsg::Confirm | SrcMsg::Go => {
                if w.parent != Some(from) {
                    return self.fail(violation(self.id, format!("{msg:?} from non-parent {from}")));
                }
                self.src_down(j, w, p, msg, out);
            }
        }
        if self.is_source() {
            if self.src_confirm_left == 0 && !self.vnodes[&0].released {
                self.release(0, ctx, out);
            }
            if self.vnodes[&0].released {
                self.eval(0, ctx, out);
            }
        }
    }

    fn release(&mut self, q: Pulse, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let v = self.id;
        if q > self.max_release {
            return self.fail(violation(v, format!("release of pulse {q} beyond limit {}", self.max_release)));
        }
        let (mut sends, changed) = if q == 0 {
            (self.stash.take().unwrap_or_default(), false)
        } else {
            let inbox = self.inbox.get(&(q - 1)).map_or(&[][..], Vec::as_slice);
            let delivered = self.vnodes.get(&(q - 1)).and_then(|x| x.sent.as_deref()).unwrap_or(&[]);
            self.app.release(v, q, ctx.neighbors(), inbox, delivered)
        };
        if changed {
            ctx.output();
        }
        sends.sort_by_key(|s| s.0);
        if sends.windows(2).any(|w| w[0].0 == w[1].0) || sends.iter().any(|s| ctx.neighbors().binary_search(&s.0).is_err()) {
            return self.fail(Error::ModelViolation(format!("node {v} made invalid sends at pulse {q}")));
        }
        self.max_released = Some(self.max_released.map_or(q, |m| m.max(q)));
        let x = self.vnodes.get_mut(&q).unwrap();
        x.released = true;
        x.sent = Some(sends.iter().map(|s| s.0).collect());
        self.stats.app_messages += sends.len() as u64;
        let chain = A::SELF_CHILD && !sends.is_empty() && !self.vnodes.contains_key(&(q + 1));
        for (dst, payload) in sends {
            out.push((dst, EngineMsg::App { pulse: q, payload }));
        }
        if chain {
            self.vnodes.get_mut(&q).unwrap().self_child = true;
            self.vnodes.insert(q + 1, Vnode { parent: Some(v), ..Default::default() });
            self.eval(q + 1, ctx, out);
        }
        self.eval(q, ctx, out);
    }

    fn status(&self, x: &Vnode, q: Pulse, p: Pulse) -> Option<bool> {
        if q == p {
            return Some(false);
        }
        if !x.children_known() {
            return None;
        }
        let r = x.reports.get(&p);
        let mut empty = true;
        for c in x.children(self.id) {
            empty &= *r?.get(&c)?;
        }
        Some(empty)
    }

    fn eval(&mut self, q: Pulse, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let Some(x) = self.vnodes.get(&q) else { return };
        let range = self.tracked(q);
        let mut fresh = Vec::new();
        for &p in &range {
            if !x.status.contains_key(&p) {
                if let Some(s) = self.status(x, q, p) {
                    fresh.push((p, s));
                }
            }
        }
        let x = self.vnodes.get_mut(&q).unwrap();
        x.status.extend(fresh);
        let status = x.status.clone();
        let reported = x.reported.clone();
        let parent = x.parent;

        for &p in &range {
            if prev2(p) != q || p > self.max_release {
                continue;
            }
            if q == 0 {
                if status.contains_key(&p) {
                    self.src_local_dereg(p, out);
                }
                if status.contains_key(&p) && self.src_go_left.get(&p) == Some(&0) && self.src_freed.insert(p) {
                    self.forward_go(0, p, out);
                }
                continue;
            }
            match self.duties.get(&p).copied() {
                None if status.get(&prev(p)) == Some(&false) => self.register(q, p, ctx, out),
                Some(Duty::Registered) if status.contains_key(&p) && !self.hold => self.deregister(p, ctx, out),
                _ => {}
            }
        }

        for &p in &range {
            if !self.reports_up(q, p) || reported.contains(&p) {
                continue;
            }
            let Some(&empty) = status.get(&p) else { continue };
            let blocked = !empty
                && range.iter().any(|&p2| {
                    prev2(p2) == q
                        && prev(p2) == p
                        && p2 <= self.max_release
                        && matches!(self.duties.get(&p2), None | Some(Duty::Registering(_)))
                });
            if blocked {
                continue;
            }
            if q <= prev2(p) && Some(p) != self.final_pulse {
                self.fail(violation(self.id, format!("pulse-{q} node forwards safety of {p}")));
            }
            self.vnodes.get_mut(&q).unwrap().reported.insert(p);
            let u = parent.expect("pulse > 0 has a parent");
            self.note_edge(u, p);
            self.stats.safe_messages += 1;
            out.push((u, EngineMsg::Safe { to: q - 1, p, empty }));
        }

        if q == 0 && !self.done_marked {
            if let (Some(f), Some(d)) = (self.final_pulse, self.done.as_mut()) {
                if status.contains_key(&f) {
                    self.done_marked = true;
                    let mut dout = Vec::new();
                    let r = d.mark_done(&mut dout);
                    out.extend(dout.into_iter().map(|(w, m)| (w, EngineMsg::Done(m))));
                    self.on_notes(r, ctx);
                }
            }
        }
    }

    fn note_edge(&mut self, u: NodeId, p: Pulse) {
        let s = self.edge_pulses.entry(u).or_default();
        s.insert(p);
        self.stats.max_pulses_per_edge = self.stats.max_pulses_per_edge.max(s.len());
    }

    fn src_local_dereg(&mut self, p: Pulse, out: &mut Out<A::Payload>) {
        let j = self.layout.layer_of(p);
        let layout = self.layout.clone();
        for w in layout.views(j, self.id) {
            let st = self.src.get_mut(&(j, w.cluster, p)).unwrap();
            if !st.local_dereg {
                st.local_dereg = true;
                self.src_progress(j, w.cluster, p, out);
            }
        }
    }

    fn register(&mut self, q: Pulse, p: Pulse, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let j = self.layout.layer_of(p);
        let layout = self.layout.clone();
        let members: Vec<&TreeView> = layout.views(j, self.id).iter().filter(|w| w.member).collect();
        *self.stats.registrations_by_level.entry(lvl(p)).or_default() += 1;
        self.duties.insert(p, Duty::Registering(members.len()));
        if members.is_empty() {
            self.duties.insert(p, Duty::Registered);
        }
        for w in members {
            let node = self.reg_node(j, w.cluster, p);
            let mut rout = Vec::new();
            let mut ev = Vec::new();
            let r = node.register(&mut rout, &mut ev);
            self.after_reg(j, w.cluster, p, r, rout, ev, ctx, out);
        }
        self.eval(q, ctx, out);
    }

    fn deregister(&mut self, p: Pulse, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let j = self.layout.layer_of(p);
        let layout = self.layout.clone();
        let members: Vec<&TreeView> = layout.views(j, self.id).iter().filter(|w| w.member).collect();
        self.duties.insert(p, Duty::Deregistering(members.len()));
        if members.is_empty() {
            self.duties.insert(p, Duty::Free);
            self.forward_go(prev2(p), p, out);
        }
        let now = ctx.now();
        for w in members {
            let node = self.reg_node(j, w.cluster, p);
            let mut rout = Vec::new();
            let mut ev = Vec::new();
            let r = node.deregister(now, &mut rout, &mut ev);
            self.after_reg(j, w.cluster, p, r, rout, ev, ctx, out);
        }
    }

    fn reg_node(&mut self, j: u8, cluster: ClusterId, p: Pulse) -> &mut RegNode {
        let id = self.id;
        let layout = &self.layout;
        self.reg.entry((j, cluster, p)).or_insert_with(|| {
            let w = layout.view(j, id, cluster).expect("own view");
            RegNode::new(id, w.parent, w.children.clone())
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn after_reg(
        &mut self,
        j: u8,
        cluster: ClusterId,
        p: Pulse,
        r: Result<()>,
        rout: Vec<(NodeId, RegMsg)>,
        ev: Vec<RegEvent>,
        ctx: &mut Ctx<'_, EngineMsg<A::Payload>>,
        out: &mut Out<A::Payload>,
    ) {
        if let Err(e) = r {
            return self.fail(e);
        }
        out.extend(rout.into_iter().map(|(u, msg)| (u, EngineMsg::Reg { layer: j, cluster, p, msg })));
        for e in ev {
            match (e, self.duties.get(&p).copied()) {
                (RegEvent::Registered, Some(Duty::Registering(left))) => {
                    if left <= 1 {
                        self.duties.insert(p, Duty::Registered);
                        self.eval(prev2(p), ctx, out);
                    } else {
                        self.duties.insert(p, Duty::Registering(left - 1));
                    }
                }
                (RegEvent::Free { .. }, Some(Duty::Deregistering(left))) => {
                    if left <= 1 {
                        self.duties.insert(p, Duty::Free);
                        self.forward_go(prev2(p), p, out);
                    } else {
                        self.duties.insert(p, Duty::Deregistering(left - 1));
                    }
                }
                (e, d) => self.fail(violation(self.id, format!("registration event {e:?} in duty {d:?} for pulse {p}"))),
            }
        }
    }

    fn forward_go(&mut self, q: Pulse, p: Pulse, out: &mut Out<A::Payload>) {
        let Some(x) = self.vnodes.get_mut(&q) else {
            return self.fail(violation(self.id, format!("Go({p}) for missing pulse-{q} node")));
        };
        if !x.go.insert(p) {
            return;
        }
        let targets: Vec<NodeId> = x
            .children(self.id)
            .filter(|c| x.reports.get(&p).and_then(|r| r.get(c)) == Some(&false))
            .collect();
        for c in targets {
            self.note_edge(c, p);
            self.stats.go_messages += 1;
            out.push((c, EngineMsg::Go { to: q + 1, p }));
        }
    }

    fn handle(&mut self, from: NodeId, msg: EngineMsg<A::Payload>, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, out: &mut Out<A::Payload>) {
        let v = self.id;
        match msg {
            EngineMsg::App { pulse: q, payload } => {
                if self.max_released.is_some_and(|m| m > q) || q < self.last_recv {
                    self.stats.ordering_violations += 1;
                    self.fail(violation(v, format!("pulse-{q} message from {from} arrived out of order")));
                }
                self.last_recv = self.last_recv.max(q);
                self.inbox.entry(q).or_default().push((from, payload));
                let accepted = self.layout.mask[v as usize]
                    && !self.vnodes.contains_key(&(q + 1))
                    && self.app.admits(!self.vnodes.is_empty());
                out.push((from, EngineMsg::Answer { pulse: q, accepted }));
                if accepted {
                    self.vnodes.insert(q + 1, Vnode { parent: Some(from), ..Default::default() });
                    if self.app.output_on_join() {
                        ctx.output();
                    }
                    self.eval(q + 1, ctx, out);
                }
            }
            EngineMsg::Answer { pulse: q, accepted } => {
                let Some(x) = self.vnodes.get_mut(&q) else {
                    return self.fail(violation(v, format!("answer for missing pulse-{q} node")));
                };
                x.answers.insert(from, accepted);
                self.eval(q, ctx, out);
            }
            EngineMsg::Safe { to, p, empty } => {
                let Some(x) = self.vnodes.get_mut(&to) else {
                    return self.fail(violation(v, format!("safety report for missing pulse-{to} node")));
                };
                x.reports.entry(p).or_default().insert(from, empty);
                self.eval(to, ctx, out);
            }
            EngineMsg::Go { to, p } => {
                let Some(x) = self.vnodes.get(&to) else {
                    return self.fail(violation(v, format!("Go({p}) for missing pulse-{to} node")));
                };
                if x.parent != Some(from) {
                    return self.fail(violation(v, format!("Go({p}) from non-parent {from}")));
                }
                if to == p {
                    if !x.released {
                        self.release(to, ctx, out);
                    }
                } else {
                    self.forward_go(to, p, out);
                }
            }
            EngineMsg::Reg { layer, cluster, p, msg } => {
                if self.layout.view(layer, v, cluster).is_none() {
                    return self.fail(violation(v, format!("registration for foreign cluster {cluster}")));
                }
                let now = ctx.now();
                let node = self.reg_node(layer, cluster, p);
                let mut rout = Vec::new();
                let mut ev = Vec::new();
                let r = node.on_msg(from, msg, now, &mut rout, &mut ev);
                self.after_reg(layer, cluster, p, r, rout, ev, ctx, out);
            }
            EngineMsg::Src { layer, cluster, p, msg } => self.on_src(from, layer, cluster, p, msg, ctx, out),
            EngineMsg::Done(m) => {
                let Some(d) = self.done.as_mut() else {
                    return self.fail(violation(v, "checking message without a checking stage"));
                };
                let mut dout = Vec::new();
                let r = d.on_msg(from, m, &mut dout);
                out.extend(dout.into_iter().map(|(w, m)| (w, EngineMsg::Done(m))));
                self.on_notes(r, ctx);
            }
        }
    }

    fn flush(&mut self, ctx: &mut Ctx<'_, EngineMsg<A::Payload>>, mut out: Out<A::Payload>) {
        let final_stage = self.cap() + 1;
        loop {
            for (dst, m) in out.drain(..) {
                if dst == self.id {
                    self.local.push_back(m);
                } else {
                    let (t, s) = m.route(final_stage);
                    ctx.send(dst, m, t, s);
                }
            }
            let Some(m) = self.local.pop_front() else { break };
            self.handle(self.id, m, ctx, &mut out);
        }
    }
}

impl<A: App> NodeProgram for EngineNode<A> {
    type Msg = EngineMsg<A::Payload>;

    fn on_start(&mut self, ctx: &mut Ctx<'_, Self::Msg>) {
        let mut out = Vec::new();
        if self.started {
            self.resume(ctx, &mut out);
        } else {
            self.start(ctx, &mut out);
        }
        self.flush(ctx, out);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, Self::Msg>, from: NodeId, msg: Self::Msg, _: Tag) {
        let mut out = Vec::new();
        self.handle(from, msg, ctx, &mut out);
        self.flush(ctx, out);
    }
}

/// First recorded error across a run's nodes.
pub(crate) fn first_error<A: App>(nodes: &[EngineNode<A>]) -> Result<()> {
    for (v, x) in nodes.iter().enumerate() {
        if let Some(e) = &x.error {
            return Err(violation(v as NodeId, e.clone()));
        }
    }
    Ok(())
}

pub(crate) fn total_stats<A: App>(nodes: &[EngineNode<A>]) -> EngineStats {
    let mut s = EngineStats::default();
    for x in nodes {
        s.absorb(&x.stats);
    }
    s
}
