//! Synchronizers for event-driven lockstep programs: the pulse-gated
//! synchronizer over layered covers, and the α baseline.

pub mod alpha;

use std::rc::Rc;

use serde::Serialize;

use crate::bfs::runners::{Bootstrap, LayerReport};
use crate::cluster::convergecast::Any;
use crate::cluster::tree_aggregate;
use crate::engine::{categorize, first_error, total_stats, App, EngineNode, EngineStats, Layout};
use crate::error::{violation, Error, Result};
use crate::graph::{NetworkGraph, NodeId};
use crate::pulse::Pulse;
use crate::sim::{AdversarySpec, RunMetrics, Session};
use crate::sync_rt::{message_multiset, run_sync, PulseCtx, SyncMessage, SyncOptions, SyncProgram};

/// Whether the synchronizer is told `T(A)` up front.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    KnownT,
    UnknownT,
}

#[derive(Clone, Debug)]
pub struct SyncOutcome<P: SyncProgram> {
    pub outputs: Vec<Option<P::Output>>,
    /// Delivered wrapped messages `(src, dst, payload, pulse)`, sorted.
    pub messages: Vec<SyncMessage<P::Msg>>,
    /// Messages and outputs equal those of the lockstep run.
    pub sync_equivalence: bool,
    /// `T(A)` of the lockstep run.
    pub rounds: u32,
    pub metrics: RunMetrics,
    pub stats: EngineStats,
    /// Doubling iterations; 0 for the α baseline.
    pub iterations: u32,
    pub layers: Vec<LayerReport>,
    pub log_digest: String,
    pub programs: Vec<P>,
}

#[derive(Clone, Debug)]
struct SyncApp<P> {
    prog: P,
}

impl<P: SyncProgram> App for SyncApp<P> {
    type Payload = P::Msg;
    const SELF_CHILD: bool = true;

    fn init(&mut self, v: NodeId, nbrs: &[NodeId]) -> Option<Vec<(NodeId, P::Msg)>> {
        let mut ctx = PulseCtx::new(v, nbrs);
        self.prog.init(&mut ctx);
        let sends = ctx.into_sends();
        (!sends.is_empty()).then_some(sends)
    }

    fn admits(&self, _: bool) -> bool {
        true
    }

    fn release(&mut self, v: NodeId, _: Pulse, nbrs: &[NodeId], inbox: &[(NodeId, P::Msg)], delivered: &[NodeId]) -> (Vec<(NodeId, P::Msg)>, bool) {
        let mut sorted = inbox.to_vec();
        sorted.sort_by_key(|m| m.0);
        let before = self.prog.output();
        let mut ctx = PulseCtx::new(v, nbrs);
        self.prog.on_pulse(&mut ctx, &sorted, delivered);
        let changed = self.prog.output() != before;
        (ctx.into_sends(), changed)
    }
}

fn equivalence<P: SyncProgram>(
    reference: &crate::sync_rt::SyncTrace<P>,
    outputs: &[Option<P::Output>],
    messages: &[SyncMessage<P::Msg>],
) -> bool {
    message_multiset(reference) == messages && reference.outputs == outputs
}

/// Iteration in which pulses up to `2^t` are simulated; covers up to `2^{t+6}` exist.
fn layout_for(n: usize, boot: &Bootstrap, max_release: Pulse) -> Result<Rc<Layout>> {
    Ok(Rc::new(Layout::new(n, &boot.layers, max_release, None, vec![true; n])?))
}

/// Runs `programs` asynchronously through the pulse-gated synchronizer.
///
/// Iteration `t` simulates pulses up to `2^t` and then builds the `2^{t+7}`
/// cover layer. With [`Mode::UnknownT`] the run stops once a cluster holding
/// every node reports that no virtual node waits beyond the simulated pulses.
pub fn synchronize<P: SyncProgram>(g: &NetworkGraph, programs: Vec<P>, mode: Mode, adv: &AdversarySpec) -> Result<SyncOutcome<P>> {
    let n = g.n();
    if programs.len() != n {
        return Err(Error::Usage("one program per node".into()));
    }
    let reference = run_sync(g, programs.clone(), SyncOptions::default())?;
    let rounds = reference.rounds;
    let mut session = Session::new(g, adv);
    let mask = vec![true; n];
    let mut boot = Bootstrap::base(&mut session, &mask)?;
    let mut nodes: Option<Vec<EngineNode<SyncApp<P>>>> = None;
    let mut programs = Some(programs);
    let mut t = 0u32;
    loop {
        let limit: Pulse = match mode {
            Mode::KnownT => (1u32 << t).min(rounds),
            Mode::UnknownT => 1 << t,
        };
        let layout = layout_for(n, &boot, limit)?;
        session.set_categorizer(categorize);
        match nodes.as_mut() {
            None => {
                let progs = programs.take().unwrap();
                let mut fresh: Vec<_> = progs
                    .into_iter()
                    .enumerate()
                    .map(|(v, prog)| EngineNode::new(v as NodeId, layout.clone(), SyncApp { prog }, limit, None))
                    .collect();
                session.run(&mut fresh)?;
                nodes = Some(fresh);
            }
            Some(ns) => {
                for x in ns.iter_mut() {
                    x.extend(layout.clone(), limit);
                    x.hold = true;
                }
                session.run(ns)?;
                for x in ns.iter_mut() {
                    x.hold = false;
                }
                session.run(ns)?;
            }
        }
        let ns = nodes.as_ref().unwrap();
        first_error(ns)?;
        let finished = match mode {
            Mode::KnownT => limit >= rounds,
            Mode::UnknownT => match boot.spanning_tree().cloned() {
                Some(tree) => {
                    session.set_category("termination");
                    let res = tree_aggregate(&mut session, std::slice::from_ref(&tree), |v, _| Any(ns[v as usize].pending()))?;
                    !res[tree.root as usize][&tree.id].0
                }
                None => false,
            },
        };
        if finished {
            break;
        }
        boot.grow(&mut session, &mask, t + 7)?;
        t += 1;
        if t > 40 {
            return Err(violation(0, "synchronizer did not terminate"));
        }
    }
    let ns = nodes.unwrap();
    let stats = total_stats(&ns);
    let mut messages = Vec::new();
    for (v, x) in ns.iter().enumerate() {
        for (&q, ib) in &x.inbox {
            messages.extend(ib.iter().map(|(u, m)| (*u, v as NodeId, m.clone(), q)));
        }
    }
    messages.sort();
    let programs: Vec<P> = ns.into_iter().map(|x| x.app.prog).collect();
    let outputs: Vec<Option<P::Output>> = programs.iter().map(P::output).collect();
    let sync_equivalence = equivalence(&reference, &outputs, &messages);
    Ok(SyncOutcome {
        outputs,
        messages,
        sync_equivalence,
        rounds,
        metrics: session.metrics(),
        stats,
        iterations: t + 1,
        layers: boot.reports,
        log_digest: session.log().digest(),
        programs,
    })
}

/// Runs `programs` under the α synchronizer for exactly `T(A)` pulses, with
/// `T(A)` taken from the lockstep run.
pub fn alpha_synchronize<P: SyncProgram>(g: &NetworkGraph, programs: Vec<P>, adv: &AdversarySpec) -> Result<SyncOutcome<P>> {
    if programs.len() != g.n() {
        return Err(Error::Usage("one program per node".into()));
    }
    let reference = run_sync(g, programs.clone(), SyncOptions::default())?;
    let mut session = Session::new(g, adv);
    session.set_categorizer(categorize);
    let (programs, messages) = alpha::alpha_in_session(&mut session, programs, reference.rounds)?;
    let outputs: Vec<Option<P::Output>> = programs.iter().map(P::output).collect();
    let sync_equivalence = equivalence(&reference, &outputs, &messages);
    Ok(SyncOutcome {
        outputs,
        messages,
        sync_equivalence,
        rounds: reference.rounds,
        metrics: session.metrics(),
        stats: EngineStats::default(),
        iterations: 0,
        layers: Vec::new(),
        log_digest: session.log().digest(),
        programs,
    })
}
