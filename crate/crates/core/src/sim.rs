//! Discrete-event simulator for the asynchronous model.
//!
//! Time is an integer tick count with `TICKS` ticks per delay bound, so every
//! delay is an exact rational `k / TICKS` with `0 < k ≤ TICKS`. Each directed
//! edge carries at most one unacknowledged algorithm envelope at a time; acks
//! bypass that limit and are never acknowledged themselves.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::{self, Debug};
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};

pub type Time = u64;
pub type Tag = u64;
pub type Stage = u32;

pub const TICKS: Time = 1 << 20;

pub fn ticks_to_tau(t: Time) -> f64 {
    t as f64 / TICKS as f64
}

/// Exact `t / TICKS` rendered as a reduced fraction.
pub fn format_time(t: Time) -> String {
    let g = num_integer::gcd(t, TICKS);
    if g == TICKS {
        format!("{}", t / TICKS)
    } else {
        format!("{}/{}", t / g, TICKS / g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Algorithm,
    Ack,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdversarySpec {
    MaxDelay,
    UniformRandom { seed: u64 },
    /// Slow edges take the full delay, the rest take `eps` ticks. When `slow`
    /// is empty, each undirected edge is slow with probability 1/2 under `seed`.
    EdgeBiased { seed: u64, eps: Time, slow: Vec<(NodeId, NodeId)> },
    /// Envelopes injected in the same instant arrive in reverse injection order.
    LifoQueue { seed: u64 },
}

impl AdversarySpec {
    pub fn edge_biased(seed: u64) -> Self {
        AdversarySpec::EdgeBiased { seed, eps: TICKS / 1024, slow: Vec::new() }
    }

    /// The three schedules used across the test matrix.
    pub fn matrix(seed: u64) -> [AdversarySpec; 3] {
        [AdversarySpec::MaxDelay, AdversarySpec::UniformRandom { seed }, AdversarySpec::edge_biased(seed)]
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::MaxDelay => f.write_str("max-delay"),
            AdversarySpec::UniformRandom { seed } => write!(f, "uniform-random:{seed}"),
            AdversarySpec::EdgeBiased { seed, .. } => write!(f, "edge-biased:{seed}"),
            AdversarySpec::LifoQueue { seed } => write!(f, "lifo-queue:{seed}"),
        }
    }
}

/// Parses `kind[:seed]`.
impl FromStr for AdversarySpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, seed) = match s.split_once(':') {
            Some((k, x)) => (k, x.parse().map_err(|_| Error::Usage(format!("bad adversary seed in `{s}`")))?),
            None => (s, 0),
        };
        Ok(match kind {
            "max-delay" => AdversarySpec::MaxDelay,
            "uniform-random" => AdversarySpec::UniformRandom { seed },
            "edge-biased" => AdversarySpec::edge_biased(seed),
            "lifo-queue" => AdversarySpec::LifoQueue { seed },
            _ => return Err(Error::Usage(format!("unknown adversary `{kind}`"))),
        })
    }
}

struct Adversary {
    spec: AdversarySpec,
    rng: ChaCha8Rng,
    slow: std::collections::HashSet<(NodeId, NodeId)>,
    burst_time: Time,
    burst: u64,
}

impl Adversary {
    fn new(spec: &AdversarySpec) -> Self {
        let seed = match spec {
            AdversarySpec::MaxDelay => 0,
            AdversarySpec::UniformRandom { seed }
            | AdversarySpec::EdgeBiased { seed, .. }
            | AdversarySpec::LifoQueue { seed } => *seed,
        };
        let slow = match spec {
            AdversarySpec::EdgeBiased { slow, .. } => slow.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect(),
            _ => Default::default(),
        };
        Self { spec: spec.clone(), rng: ChaCha8Rng::seed_from_u64(seed), slow, burst_time: Time::MAX, burst: 0 }
    }

    fn is_slow(&self, seed: u64, u: NodeId, v: NodeId) -> bool {
        let e = (u.min(v), u.max(v));
        if !self.slow.is_empty() {
            return self.slow.contains(&e);
        }
        let mut h = DefaultHasher::new();
        (seed, e).hash(&mut h);
        h.finish() & 1 == 0
    }

    fn delay(&mut self, src: NodeId, dst: NodeId, now: Time) -> Time {
        match &self.spec {
            AdversarySpec::MaxDelay => TICKS,
            AdversarySpec::UniformRandom { .. } => self.rng.gen_range(1..=TICKS),
            AdversarySpec::EdgeBiased { seed, eps, .. } => {
                if self.is_slow(*seed, src, dst) {
                    TICKS
                } else {
                    (*eps).clamp(1, TICKS)
                }
            }
            AdversarySpec::LifoQueue { .. } => {
                if now == self.burst_time {
                    self.burst += 1;
                } else {
                    self.burst_time = now;
                    self.burst = 0;
                }
                let step = TICKS / 4096;
                TICKS.saturating_sub(self.burst.min(4095) * step).max(1)
            }
        }
    }
}

/// Handler context handed to node programs.
pub struct Ctx<'a, M> {
    id: NodeId,
    now: Time,
    neighbors: &'a [NodeId],
    sends: &'a mut Vec<Outgoing<M>>,
    timers: &'a mut Vec<(Time, u64)>,
    output: &'a mut bool,
}

pub(crate) struct Outgoing<M> {
    dst: NodeId,
    msg: M,
    tag: Tag,
    stage: Stage,
}

impl<M> Ctx<'_, M> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn neighbors(&self) -> &[NodeId] {
        self.neighbors
    }

    /// Queues `msg` on the edge to `dst`. Lower stages are injected first.
    pub fn send(&mut self, dst: NodeId, msg: M, tag: Tag, stage: Stage) {
        self.sends.push(Outgoing { dst, msg, tag, stage });
    }

    /// Records that this node produced (or revised) its output now.
    pub fn output(&mut self) {
        *self.output = true;
    }

    /// Local wake-up after `delay` ticks; used by test harnesses to inject external stimuli.
    pub fn set_timer(&mut self, delay: Time, token: u64) {
        self.timers.push((self.now + delay, token));
    }
}

pub trait NodeProgram {
    type Msg: Clone + Debug + Hash;

    fn on_start(&mut self, ctx: &mut Ctx<'_, Self::Msg>);

    fn on_receive(&mut self, ctx: &mut Ctx<'_, Self::Msg>, from: NodeId, msg: Self::Msg, tag: Tag);

    fn on_ack(&mut self, _ctx: &mut Ctx<'_, Self::Msg>, _to: NodeId, _tag: Tag) {}

    fn on_timer(&mut self, _ctx: &mut Ctx<'_, Self::Msg>, _token: u64) {}
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub max_events: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_events: 100_000_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub messages_total: u64,
    pub algorithm_messages: u64,
    pub ack_messages: u64,
    /// Delivered envelopes (acks included) per protocol category.
    pub messages_by_category: BTreeMap<String, u64>,
    pub normalized_time: f64,
    pub time_to_all_outputs: Option<f64>,
    pub events: u64,
    #[serde(skip)]
    pub end_ticks: Time,
    #[serde(skip)]
    pub output_ticks: Vec<Option<Time>>,
}

impl RunMetrics {
    fn finish(&mut self, end: Time) {
        self.end_ticks = end;
        self.normalized_time = ticks_to_tau(end);
        self.time_to_all_outputs = if self.output_ticks.iter().all(Option::is_some) {
            self.output_ticks.iter().flatten().max().map(|&t| ticks_to_tau(t))
        } else {
            None
        };
    }
}

/// Replay digest of the delivery log, with an optional textual copy.
#[derive(Clone)]
pub struct EventLog {
    hasher: Sha256,
    lines: Option<Vec<String>>,
}

impl EventLog {
    fn new(keep_lines: bool) -> Self {
        Self { hasher: Sha256::new(), lines: keep_lines.then(Vec::new) }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, t: Time, src: NodeId, dst: NodeId, kind: Kind, stage: Stage, tag: Tag, digest: u64) {
        let mut buf = [0u8; 41];
        buf[0..8].copy_from_slice(&t.to_le_bytes());
        buf[8..12].copy_from_slice(&src.to_le_bytes());
        buf[12..16].copy_from_slice(&dst.to_le_bytes());
        buf[16] = kind as u8;
        buf[17..21].copy_from_slice(&stage.to_le_bytes());
        buf[21..29].copy_from_slice(&tag.to_le_bytes());
        buf[29..37].copy_from_slice(&digest.to_le_bytes());
        self.hasher.update(buf);
        if let Some(lines) = &mut self.lines {
            let k = match kind {
                Kind::Algorithm => "alg",
                Kind::Ack => "ack",
            };
            lines.push(format!("{} {src} {dst} {k} {stage} {tag:x} {digest:016x}", format_time(t)));
        }
    }

    pub fn digest(&self) -> String {
        self.hasher.clone().finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lines(&self) -> Option<&[String]> {
        self.lines.as_deref()
    }
}

fn payload_digest<M: Hash>(m: &M) -> u64 {
    let mut h = DefaultHasher::new();
    m.hash(&mut h);
    h.finish()
}

enum EvKind<M> {
    Deliver { msg: M, tag: Tag, stage: Stage },
    Ack { tag: Tag, stage: Stage },
    Timer { token: u64 },
}

struct Event<M> {
    time: Time,
    dst: NodeId,
    src: NodeId,
    seq: u64,
    kind: EvKind<M>,
}

impl<M> Event<M> {
    fn key(&self) -> (Time, NodeId, NodeId, u64) {
        (self.time, self.dst, self.src, self.seq)
    }
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<M> Eq for Event<M> {}
impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for Event<M> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct StageQueue<M> {
    order: VecDeque<Tag>,
    queues: HashMap<Tag, VecDeque<M>>,
}

/// Pending envelopes on one directed edge.
struct Channel<M> {
    busy: bool,
    stages: BTreeMap<Stage, StageQueue<M>>,
}

impl<M> Default for Channel<M> {
    fn default() -> Self {
        Self { busy: false, stages: BTreeMap::new() }
    }
}

impl<M> Channel<M> {
    fn push(&mut self, msg: M, tag: Tag, stage: Stage) {
        let sq = self.stages.entry(stage).or_insert_with(|| StageQueue { order: VecDeque::new(), queues: HashMap::new() });
        let q = sq.queues.entry(tag).or_default();
        if q.is_empty() {
            sq.order.push_back(tag);
        }
        q.push_back(msg);
    }

    /// Lowest stage first, round-robin over tags within a stage, FIFO within a tag.
    fn pop(&mut self) -> Option<(M, Tag, Stage)> {
        let mut entry = self.stages.first_entry()?;
        let stage = *entry.key();
        let sq = entry.get_mut();
        let tag = sq.order.pop_front().expect("stage queue without tags");
        let q = sq.queues.get_mut(&tag).unwrap();
        let msg = q.pop_front().unwrap();
        if q.is_empty() {
            sq.queues.remove(&tag);
        } else {
            sq.order.push_back(tag);
        }
        if sq.order.is_empty() {
            entry.remove();
        }
        Some((msg, tag, stage))
    }
}

/// Exposes the edge scheduling rule on its own: returns the emission order of a
/// batch of `(tag, stage)` envelopes queued on one edge before any is sent.
pub fn schedule_edge(pending: &[(Tag, Stage)]) -> Vec<(Tag, Stage)> {
    let mut ch = Channel::default();
    for &(tag, stage) in pending {
        ch.push((), tag, stage);
    }
    std::iter::from_fn(|| ch.pop().map(|((), t, s)| (t, s))).collect()
}

/// A simulation that may span several protocol runs sharing one clock,
/// one adversary and one delivery log.
pub struct Session<'g> {
    g: &'g NetworkGraph,
    offsets: Vec<usize>,
    adversary: Adversary,
    now: Time,
    seq: u64,
    limits: Limits,
    metrics: RunMetrics,
    log: EventLog,
    category: String,
    categorize: Option<fn(Tag) -> &'static str>,
}

impl<'g> Session<'g> {
    pub fn new(g: &'g NetworkGraph, adversary: &AdversarySpec) -> Self {
        let mut offsets = Vec::with_capacity(g.n() + 1);
        let mut acc = 0;
        for v in 0..g.n() as NodeId {
            offsets.push(acc);
            acc += g.degree(v);
        }
        offsets.push(acc);
        Self {
            g,
            offsets,
            adversary: Adversary::new(adversary),
            now: 0,
            seq: 0,
            limits: Limits::default(),
            metrics: RunMetrics { output_ticks: vec![None; g.n()], ..Default::default() },
            log: EventLog::new(false),
            category: "main".into(),
            categorize: None,
        }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    /// Keeps the textual delivery log in memory.
    pub fn with_trace(mut self) -> Self {
        self.log = EventLog::new(true);
        self
    }

    pub fn graph(&self) -> &'g NetworkGraph {
        self.g
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn set_category(&mut self, category: &str) {
        self.category = category.to_string();
        self.categorize = None;
    }

    /// Names each delivered envelope's category from its tag instead of a fixed label.
    pub fn set_categorizer(&mut self, f: fn(Tag) -> &'static str) {
        self.categorize = Some(f);
    }

    pub fn metrics(&self) -> RunMetrics {
        let mut m = self.metrics.clone();
        m.finish(self.now);
        m
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Marks `v` as having produced output at the current time.
    pub fn mark_output(&mut self, v: NodeId) {
        self.metrics.output_ticks[v as usize] = Some(self.now);
    }

    pub fn output_ticks(&self) -> &[Option<Time>] {
        &self.metrics.output_ticks
    }

    pub fn run<P: NodeProgram>(&mut self, programs: &mut [P]) -> Result<()> {
        self.run_observed(programs, |_, _| Ok(()))
    }

    /// Runs `programs` from the current clock until quiescence. `observe` sees
    /// all node states after every event and may abort the run.
    pub fn run_observed<P, F>(&mut self, programs: &mut [P], mut observe: F) -> Result<()>
    where
        P: NodeProgram,
        F: FnMut(Time, &[P]) -> std::result::Result<(), String>,
    {
        assert_eq!(programs.len(), self.g.n(), "one program per node");
        let n = self.g.n();
        let mut channels: Vec<Option<Box<Channel<P::Msg>>>> = (0..self.offsets[n]).map(|_| None).collect();
        let mut heap: BinaryHeap<Event<P::Msg>> = BinaryHeap::new();
        let mut recent: VecDeque<(Time, NodeId, NodeId, &'static str, Tag)> = VecDeque::new();
        let mut sends = Vec::new();
        let mut timers = Vec::new();
        let mut events: u64 = 0;

        macro_rules! call {
            ($v:expr, $body:expr) => {{
                let v: NodeId = $v;
                let mut out = false;
                let mut ctx = Ctx {
                    id: v,
                    now: self.now,
                    neighbors: self.g.neighbors(v),
                    sends: &mut sends,
                    timers: &mut timers,
                    output: &mut out,
                };
                let prog = &mut programs[v as usize];
                let res = catch_unwind(AssertUnwindSafe(|| $body(prog, &mut ctx)));
                if let Err(p) = res {
                    let message = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default();
                    return Err(Error::HandlerPanic { node: v, message, trace: recent
                            .iter()
                            .map(|(t, s, d, k, tag)| format!("{} {s}->{d} {k} tag={tag:x}", format_time(*t)))
                            .collect() });
                }
                if out {
                    self.metrics.output_ticks[v as usize] = Some(self.now);
                }
                for (at, token) in timers.drain(..) {
                    self.seq += 1;
                    heap.push(Event { time: at, dst: v, src: v, seq: self.seq, kind: EvKind::Timer { token } });
                }
                let mut touched: Vec<usize> = Vec::new();
                for o in sends.drain(..) {
                    let idx = match self.g.neighbors(v).binary_search(&o.dst) {
                        Ok(i) => self.offsets[v as usize] + i,
                        Err(_) => {
                            return Err(Error::ModelViolation(format!("node {v} sent to non-neighbour {}", o.dst)))
                        }
                    };
                    channels[idx].get_or_insert_with(Default::default).push(o.msg, o.tag, o.stage);
                    touched.push(idx);
                }
                for idx in touched {
                    self.pump(&mut channels, &mut heap, v, idx);
                }
            }};
        }

        for v in 0..n as NodeId {
            call!(v, |p: &mut P, c: &mut Ctx<'_, P::Msg>| p.on_start(c));
        }
        observe(self.now, programs).map_err(Error::ModelViolation)?;

        while let Some(ev) = heap.pop() {
            events += 1;
            if events > self.limits.max_events {
                return Err(Error::EventCap { cap: self.limits.max_events, time: ev.time });
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            let (src, dst) = (ev.src, ev.dst);
            if recent.len() == 16 {
                recent.pop_front();
            }
            match ev.kind {
                EvKind::Deliver { msg, tag, stage } => {
                    let digest = payload_digest(&msg);
                    self.log.record(self.now, src, dst, Kind::Algorithm, stage, tag, digest);
                    self.count(Kind::Algorithm, tag);
                    recent.push_back((self.now, src, dst, "alg", tag));
                    let delay = self.adversary.delay(dst, src, self.now);
                    self.seq += 1;
                    heap.push(Event { time: self.now + delay, dst: src, src: dst, seq: self.seq, kind: EvKind::Ack { tag, stage } });
                    call!(dst, |p: &mut P, c: &mut Ctx<'_, P::Msg>| p.on_receive(c, src, msg, tag));
                }
                EvKind::Ack { tag, stage } => {
                    self.log.record(self.now, src, dst, Kind::Ack, stage, tag, 0);
                    self.count(Kind::Ack, tag);
                    recent.push_back((self.now, src, dst, "ack", tag));
                    // The ack returns to the original sender `dst`.
                    let i = self.g.neighbors(dst).binary_search(&src).unwrap();
                    let idx = self.offsets[dst as usize] + i;
                    channels[idx].as_mut().unwrap().busy = false;
                    call!(dst, |p: &mut P, c: &mut Ctx<'_, P::Msg>| p.on_ack(c, src, tag));
                    self.pump(&mut channels, &mut heap, dst, idx);
                }
                EvKind::Timer { token } => {
                    recent.push_back((self.now, dst, dst, "timer", token));
                    call!(dst, |p: &mut P, c: &mut Ctx<'_, P::Msg>| p.on_timer(c, token));
                }
            }
            observe(self.now, programs).map_err(Error::ModelViolation)?;
        }
        self.metrics.events += events;
        Ok(())
    }

    fn count(&mut self, kind: Kind, tag: Tag) {
        self.metrics.messages_total += 1;
        match kind {
            Kind::Algorithm => self.metrics.algorithm_messages += 1,
            Kind::Ack => self.metrics.ack_messages += 1,
        }
        let cat = match self.categorize {
            Some(f) => f(tag),
            None => &self.category,
        };
        if let Some(c) = self.metrics.messages_by_category.get_mut(cat) {
            *c += 1;
        } else {
            self.metrics.messages_by_category.insert(cat.to_string(), 1);
        }
    }

    fn pump<M>(&mut self, channels: &mut [Option<Box<Channel<M>>>], heap: &mut BinaryHeap<Event<M>>, src: NodeId, idx: usize) {
        let ch = channels[idx].as_mut().unwrap();
        if ch.busy {
            return;
        }
        if let Some((msg, tag, stage)) = ch.pop() {
            ch.busy = true;
            let dst = self.g.neighbors(src)[idx - self.offsets[src as usize]];
            let delay = self.adversary.delay(src, dst, self.now);
            debug_assert!((1..=TICKS).contains(&delay));
            self.seq += 1;
            heap.push(Event { time: self.now + delay, dst, src, seq: self.seq, kind: EvKind::Deliver { msg, tag, stage } });
        }
    }
}

/// One-shot run of a single program on a fresh session.
pub fn run_async<P: NodeProgram>(
    g: &NetworkGraph,
    programs: &mut [P],
    adversary: &AdversarySpec,
    limits: Limits,
) -> Result<RunMetrics> {
    let mut s = Session::new(g, adversary).with_limits(limits);
    s.run(programs)?;
    Ok(s.metrics())
}
