//! The α synchronizer: every node runs every pulse and, once its own messages
//! are acknowledged, tells every neighbour that it is safe.

use std::collections::BTreeMap;

use crate::cluster::{kind, tag};
use crate::error::{violation, Result};
use crate::graph::NodeId;
use crate::pulse::Pulse;
use crate::sim::{Ctx, NodeProgram, Session, Tag};
use crate::sync_rt::{PulseCtx, SyncMessage, SyncProgram};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AlphaMsg<M> {
    App { pulse: Pulse, payload: M },
    Safe { pulse: Pulse },
}

pub(crate) struct AlphaNode<P: SyncProgram> {
    pub(crate) prog: P,
    rounds: u32,
    pulse: Pulse,
    sent: Vec<NodeId>,
    acks_left: usize,
    safe: bool,
    safe_from: BTreeMap<Pulse, usize>,
    inbox: BTreeMap<Pulse, Vec<(NodeId, P::Msg)>>,
    finished: bool,
    pub(crate) received: Vec<SyncMessage<P::Msg>>,
    pub(crate) error: Option<String>,
}

impl<P: SyncProgram> AlphaNode<P> {
    pub(crate) fn new(prog: P, rounds: u32) -> Self {
        Self {
            prog,
            rounds,
            pulse: 0,
            sent: Vec::new(),
            acks_left: 0,
            safe: false,
            safe_from: BTreeMap::new(),
            inbox: BTreeMap::new(),
            finished: false,
            received: Vec::new(),
            error: None,
        }
    }

    fn begin(&mut self, ctx: &mut Ctx<'_, AlphaMsg<P::Msg>>, mut sends: Vec<(NodeId, P::Msg)>) {
        let p = self.pulse;
        sends.sort_by_key(|s| s.0);
        if sends.windows(2).any(|w| w[0].0 == w[1].0) || sends.iter().any(|s| ctx.neighbors().binary_search(&s.0).is_err()) {
            self.error = Some(format!("invalid sends at pulse {p}"));
            return;
        }
        self.sent = sends.iter().map(|s| s.0).collect();
        self.acks_left = sends.len();
        self.safe = false;
        for (d, payload) in sends {
            ctx.send(d, AlphaMsg::App { pulse: p, payload }, tag(kind::APP, 0, p), p + 1);
        }
        if self.acks_left == 0 {
            self.become_safe(ctx);
        }
    }

    fn become_safe(&mut self, ctx: &mut Ctx<'_, AlphaMsg<P::Msg>>) {
        self.safe = true;
        let p = self.pulse;
        for u in ctx.neighbors().to_vec() {
            ctx.send(u, AlphaMsg::Safe { pulse: p }, tag(kind::ALPHA_SAFE, 0, p), p + 1);
        }
        self.advance(ctx);
    }

    fn advance(&mut self, ctx: &mut Ctx<'_, AlphaMsg<P::Msg>>) {
        let deg = ctx.neighbors().len();
        if self.finished || !self.safe || self.safe_from.get(&self.pulse).copied().unwrap_or(0) < deg {
            return;
        }
        let p = self.pulse;
        let mut inbox = self.inbox.remove(&p).unwrap_or_default();
        inbox.sort_by_key(|m| m.0);
        let delivered = std::mem::take(&mut self.sent);
        let nbrs = ctx.neighbors().to_vec();
        let mut pc = PulseCtx::new(ctx.id(), &nbrs);
        if !inbox.is_empty() || !delivered.is_empty() {
            let before = self.prog.output();
            self.prog.on_pulse(&mut pc, &inbox, &delivered);
            if self.prog.output() != before {
                ctx.output();
            }
        }
        let sends = pc.into_sends();
        if p + 1 < self.rounds {
            self.pulse = p + 1;
            self.begin(ctx, sends);
        } else {
            self.finished = true;
            if !sends.is_empty() {
                self.error = Some(format!("program still sends after pulse {p}"));
            }
        }
    }
}

impl<P: SyncProgram> NodeProgram for AlphaNode<P> {
    type Msg = AlphaMsg<P::Msg>;

    fn on_start(&mut self, ctx: &mut Ctx<'_, Self::Msg>) {
        let nbrs = ctx.neighbors().to_vec();
        let mut pc = PulseCtx::new(ctx.id(), &nbrs);
        self.prog.init(&mut pc);
        ctx.output();
        let sends = pc.into_sends();
        if self.rounds == 0 {
            self.finished = true;
            if !sends.is_empty() {
                self.error = Some("program sends but was given no pulses".into());
            }
            return;
        }
        self.begin(ctx, sends);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_, Self::Msg>, from: NodeId, msg: Self::Msg, _: Tag) {
        match msg {
            AlphaMsg::App { pulse, payload } => {
                self.received.push((from, ctx.id(), payload.clone(), pulse));
                self.inbox.entry(pulse).or_default().push((from, payload));
            }
            AlphaMsg::Safe { pulse } => {
                *self.safe_from.entry(pulse).or_default() += 1;
                self.advance(ctx);
            }
        }
    }

    fn on_ack(&mut self, ctx: &mut Ctx<'_, Self::Msg>, _: NodeId, t: Tag) {
        if (t >> 60) as u8 == kind::APP {
            self.acks_left -= 1;
            if self.acks_left == 0 {
                self.become_safe(ctx);
            }
        }
    }
}

/// Final program states and the sorted multiset of delivered messages.
pub(crate) type AlphaRun<P> = (Vec<P>, Vec<SyncMessage<<P as SyncProgram>::Msg>>);

/// Runs `programs` for `rounds` pulses under α inside `session`.
pub(crate) fn alpha_in_session<P: SyncProgram>(session: &mut Session<'_>, programs: Vec<P>, rounds: u32) -> Result<AlphaRun<P>> {
    let mut nodes: Vec<AlphaNode<P>> = programs.into_iter().map(|p| AlphaNode::new(p, rounds)).collect();
    session.run(&mut nodes)?;
    let mut msgs = Vec::new();
    let mut progs = Vec::with_capacity(nodes.len());
    for (v, x) in nodes.into_iter().enumerate() {
        if let Some(e) = x.error {
            return Err(violation(v as NodeId, e));
        }
        if !x.finished {
            return Err(violation(v as NodeId, "α run stalled before its last pulse"));
        }
        msgs.extend(x.received);
        progs.push(x.prog);
    }
    msgs.sort();
    Ok((progs, msgs))
}
