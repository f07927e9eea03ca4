//! Epoch-based leader election as a lockstep program.
//!
//! In epoch `i` every remaining candidate probes its `2^i`-ball and collects
//! the minimum id in it by echo. A candidate that sees a smaller id drops out;
//! one whose probe found no node beyond the ball announces itself.

use std::collections::BTreeMap;

use crate::graph::{NetworkGraph, NodeId};
use crate::sync_rt::{PulseCtx, SyncProgram};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeaderItem {
    /// `hops` is the receiver's distance from `root`.
    Probe { root: NodeId, epoch: u32, hops: u32 },
    Nack { root: NodeId, epoch: u32 },
    Echo { root: NodeId, epoch: u32, min: NodeId, far: bool },
    Leader(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
struct ProbeState {
    parent: Option<NodeId>,
    waiting: usize,
    min: NodeId,
    far: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeaderElection {
    id: NodeId,
    candidate: bool,
    epoch: u32,
    leader: Option<NodeId>,
    probes: BTreeMap<(NodeId, u32), ProbeState>,
}

type Outbox = BTreeMap<NodeId, Vec<LeaderItem>>;

impl LeaderElection {
    pub fn for_graph(g: &NetworkGraph) -> Vec<Self> {
        (0..g.n() as NodeId)
            .map(|id| LeaderElection { id, candidate: true, epoch: 0, leader: None, probes: BTreeMap::new() })
            .collect()
    }

    /// Epochs this node ran as a candidate.
    pub fn epochs(&self) -> u32 {
        self.epoch + 1
    }

    fn start_epoch(&mut self, nbrs: &[NodeId], out: &mut Outbox) {
        let key = (self.id, self.epoch);
        self.probes.insert(key, ProbeState { parent: None, waiting: nbrs.len(), min: self.id, far: false });
        for &u in nbrs {
            out.entry(u).or_default().push(LeaderItem::Probe { root: self.id, epoch: self.epoch, hops: 1 });
        }
        self.maybe_finish(key, nbrs, out);
    }

    fn maybe_finish(&mut self, key: (NodeId, u32), nbrs: &[NodeId], out: &mut Outbox) {
        let st = &self.probes[&key];
        if st.waiting > 0 {
            return;
        }
        let (min, far) = (st.min, st.far);
        match st.parent {
            Some(p) => out.entry(p).or_default().push(LeaderItem::Echo { root: key.0, epoch: key.1, min, far }),
            None if !self.candidate => {}
            None if min < self.id => self.candidate = false,
            None if !far => {
                self.candidate = false;
                self.leader = Some(self.id);
                for &u in nbrs {
                    out.entry(u).or_default().push(LeaderItem::Leader(self.id));
                }
            }
            None => {
                self.epoch += 1;
                self.start_epoch(nbrs, out);
            }
        }
    }
}

impl SyncProgram for LeaderElection {
    type Msg = Vec<LeaderItem>;
    type Output = NodeId;

    fn init(&mut self, ctx: &mut PulseCtx<'_, Vec<LeaderItem>>) {
        let mut out = Outbox::new();
        self.start_epoch(ctx.neighbors(), &mut out);
        for (u, items) in out {
            ctx.send(u, items);
        }
    }

    fn on_pulse(&mut self, ctx: &mut PulseCtx<'_, Vec<LeaderItem>>, inbox: &[(NodeId, Vec<LeaderItem>)], _: &[NodeId]) {
        let nbrs = ctx.neighbors();
        let mut out = Outbox::new();
        let mut probes: BTreeMap<(NodeId, u32), (u32, Vec<NodeId>)> = BTreeMap::new();
        let mut announced = Vec::new();
        for (from, items) in inbox {
            for item in items {
                match *item {
                    LeaderItem::Probe { root, epoch, hops } => probes.entry((root, epoch)).or_insert((hops, Vec::new())).1.push(*from),
                    LeaderItem::Nack { root, epoch } | LeaderItem::Echo { root, epoch, .. } => {
                        let key = (root, epoch);
                        let Some(st) = self.probes.get_mut(&key) else { continue };
                        if let LeaderItem::Echo { min, far, .. } = *item {
                            st.min = st.min.min(min);
                            st.far |= far;
                        }
                        st.waiting -= 1;
                        self.maybe_finish(key, nbrs, &mut out);
                    }
                    LeaderItem::Leader(l) => announced.push((l, *from)),
                }
            }
        }
        for ((root, epoch), (hops, senders)) in probes {
            let key = (root, epoch);
            if self.probes.contains_key(&key) {
                for s in senders {
                    out.entry(s).or_default().push(LeaderItem::Nack { root, epoch });
                }
                continue;
            }
            if hops > 1 << epoch {
                for s in senders {
                    out.entry(s).or_default().push(LeaderItem::Echo { root, epoch, min: NodeId::MAX, far: true });
                }
                continue;
            }
            let parent = *senders.iter().min().unwrap();
            for &s in senders.iter().filter(|&&s| s != parent) {
                out.entry(s).or_default().push(LeaderItem::Nack { root, epoch });
            }
            let targets: Vec<NodeId> = nbrs.iter().copied().filter(|u| !senders.contains(u)).collect();
            for &u in &targets {
                out.entry(u).or_default().push(LeaderItem::Probe { root, epoch, hops: hops + 1 });
            }
            self.probes.insert(key, ProbeState { parent: Some(parent), waiting: targets.len(), min: self.id, far: false });
            self.maybe_finish(key, nbrs, &mut out);
        }
        if let Some(&(l, _)) = announced.first() {
            if self.leader.is_none() {
                self.leader = Some(l);
                self.candidate = false;
                for &u in nbrs {
                    if !announced.iter().any(|a| a.1 == u) {
                        out.entry(u).or_default().push(LeaderItem::Leader(l));
                    }
                }
            }
        }
        for (u, mut items) in out {
            items.sort();
            ctx.send(u, items);
        }
    }

    fn output(&self) -> Option<NodeId> {
        self.leader
    }
}
