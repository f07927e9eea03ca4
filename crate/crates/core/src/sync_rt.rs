//! Lockstep synchronous executor for event-driven programs.
//!
//! A program acts only on events: `init` may send pulse-0 messages, and
//! `on_pulse` is invoked once per pulse at a node that received messages or
//! had its own previous-pulse messages delivered. Everything sent from
//! `on_pulse` after pulse `p` belongs to pulse `p + 1`.

use std::fmt::Debug;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::pulse::Pulse;

pub struct PulseCtx<'a, M> {
    id: NodeId,
    neighbors: &'a [NodeId],
    sends: Vec<(NodeId, M)>,
}

impl<'a, M> PulseCtx<'a, M> {
    pub(crate) fn new(id: NodeId, neighbors: &'a [NodeId]) -> Self {
        Self { id, neighbors, sends: Vec::new() }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn neighbors(&self) -> &'a [NodeId] {
        self.neighbors
    }

    pub fn send(&mut self, dst: NodeId, msg: M) {
        self.sends.push((dst, msg));
    }

    pub(crate) fn into_sends(self) -> Vec<(NodeId, M)> {
        self.sends
    }
}

pub trait SyncProgram: Clone {
    type Msg: Clone + Debug + Hash + Ord;
    type Output: Clone + Debug + PartialEq;

    fn init(&mut self, ctx: &mut PulseCtx<'_, Self::Msg>);

    /// `inbox` is sorted by sender; `delivered` lists destinations of this
    /// node's messages from the pulse just finished.
    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, Self::Msg>, inbox: &[(NodeId, Self::Msg)], delivered: &[NodeId]);

    fn output(&self) -> Option<Self::Output>;
}

/// `(src, dst, payload, pulse)`.
pub type SyncMessage<M> = (NodeId, NodeId, M, Pulse);

#[derive(Clone, Debug)]
pub struct SyncTrace<P: SyncProgram> {
    /// T(A): number of pulses that carried messages.
    pub rounds: u32,
    pub messages: Vec<SyncMessage<P::Msg>>,
    pub outputs: Vec<Option<P::Output>>,
    pub programs: Vec<P>,
}

impl<P: SyncProgram> SyncTrace<P> {
    /// M(A).
    pub fn message_total(&self) -> u64 {
        self.messages.len() as u64
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SyncOptions {
    /// Re-runs every handler with reversed delivery order and rejects order dependence.
    pub check_order: bool,
    pub max_rounds: u32,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self { check_order: cfg!(debug_assertions), max_rounds: 1 << 20 }
    }
}

/// Validates one handler's sends: neighbours only, at most one per neighbour.
pub(crate) fn check_sends<M>(g: &NetworkGraph, v: NodeId, sends: &mut [(NodeId, M)], pulse: Pulse) -> Result<()> {
    sends.sort_by_key(|s| s.0);
    for w in sends.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::ModelViolation(format!(
                "node {v} sent two messages to {} in pulse {pulse}",
                w[0].0
            )));
        }
    }
    if let Some((d, _)) = sends.iter().find(|(d, _)| !g.has_edge(v, *d)) {
        return Err(Error::ModelViolation(format!("node {v} sent to non-neighbour {d}")));
    }
    Ok(())
}

fn handle<P: SyncProgram>(
    g: &NetworkGraph,
    v: NodeId,
    prog: &mut P,
    inbox: &[(NodeId, P::Msg)],
    delivered: &[NodeId],
    pulse: Pulse,
    check_order: bool,
) -> Result<Vec<(NodeId, P::Msg)>> {
    let shadow = check_order.then(|| prog.clone());
    let mut ctx = PulseCtx::new(v, g.neighbors(v));
    prog.on_pulse(&mut ctx, inbox, delivered);
    let mut sends = ctx.into_sends();
    check_sends(g, v, &mut sends, pulse + 1)?;
    if let Some(mut other) = shadow {
        let rin: Vec<_> = inbox.iter().rev().cloned().collect();
        let rdel: Vec<_> = delivered.iter().rev().copied().collect();
        let mut ctx = PulseCtx::new(v, g.neighbors(v));
        other.on_pulse(&mut ctx, &rin, &rdel);
        let mut alt = ctx.into_sends();
        alt.sort_by_key(|s| s.0);
        if alt != sends || other.output() != prog.output() {
            return Err(Error::ModelViolation(format!("node {v} depends on delivery order in pulse {pulse}")));
        }
    }
    Ok(sends)
}

pub fn run_sync<P: SyncProgram>(g: &NetworkGraph, mut programs: Vec<P>, opts: SyncOptions) -> Result<SyncTrace<P>> {
    assert_eq!(programs.len(), g.n(), "one program per node");
    let n = g.n();
    let mut all = Vec::new();
    let mut current: Vec<SyncMessage<P::Msg>> = Vec::new();
    for (v, prog) in programs.iter_mut().enumerate() {
        let v = v as NodeId;
        let mut ctx = PulseCtx::new(v, g.neighbors(v));
        prog.init(&mut ctx);
        let mut sends = ctx.into_sends();
        check_sends(g, v, &mut sends, 0)?;
        current.extend(sends.into_iter().map(|(d, m)| (v, d, m, 0)));
    }
    let mut pulse: Pulse = 0;
    while !current.is_empty() {
        if pulse >= opts.max_rounds {
            return Err(Error::ModelViolation(format!("no quiescence within {} rounds", opts.max_rounds)));
        }
        let mut inbox: Vec<Vec<(NodeId, P::Msg)>> = vec![Vec::new(); n];
        let mut delivered: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (s, d, m, _) in &current {
            inbox[*d as usize].push((*s, m.clone()));
            delivered[*s as usize].push(*d);
        }
        let mut next = Vec::new();
        for v in 0..n {
            if inbox[v].is_empty() && delivered[v].is_empty() {
                continue;
            }
            inbox[v].sort_by_key(|x| x.0);
            delivered[v].sort_unstable();
            let sends = handle(g, v as NodeId, &mut programs[v], &inbox[v], &delivered[v], pulse, opts.check_order)?;
            next.extend(sends.into_iter().map(|(d, m)| (v as NodeId, d, m, pulse + 1)));
        }
        all.append(&mut current);
        current = next;
        pulse += 1;
    }
    all.sort();
    let outputs = programs.iter().map(P::output).collect();
    Ok(SyncTrace { rounds: pulse, messages: all, outputs, programs })
}

/// Canonical sorted multiset of delivered messages.
pub fn message_multiset<P: SyncProgram>(trace: &SyncTrace<P>) -> Vec<SyncMessage<P::Msg>> {
    let mut v = trace.messages.clone();
    v.sort();
    v
}
