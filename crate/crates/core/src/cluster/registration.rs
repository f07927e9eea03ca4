//! Registration on a cluster tree with dirty/waiting edge marks.
//!
//! The child endpoint of a tree edge owns its mark; the parent keeps a view
//! that is updated only by messages. A registrant marks its root path dirty
//! (procedure R), a deregistration turns dirty marks into waiting marks up to
//! the first node that still has reason to keep them (procedure D), and the
//! root sends Go-Ahead back down along waiting edges once no child edge of it
//! is dirty.

use serde::{Deserialize, Serialize};

use crate::error::{violation, Result};
use crate::graph::NodeId;
use crate::sim::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    Clean,
    Dirty,
    Waiting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegMsg {
    /// Marks the sender's up-edge dirty and invokes R at the receiver.
    MarkDirty,
    /// Invokes R at the receiver over an edge that is already dirty.
    InvokeR,
    RDone,
    /// Marks the sender's up-edge waiting and invokes D at the receiver.
    MarkWaiting,
    /// Carries the root's issue time.
    GoAhead { issued: Time },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegEvent {
    Registered,
    Free { issued: Time },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Registering,
    Registered,
    Deregistered,
    Free,
}

#[derive(Clone, Debug)]
pub struct RegNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    children: Vec<NodeId>,
    /// Mark of the edge to the parent (owned here).
    pub up: Mark,
    /// View of the children's marks, aligned with `children`.
    child_marks: Vec<Mark>,
    pub finished: bool,
    running_r: bool,
    /// Children waiting for RDone, and whether this node's own registration waits too.
    queued: Vec<NodeId>,
    self_queued: bool,
    pub phase: Option<Phase>,
}

pub type Out = Vec<(NodeId, RegMsg)>;

impl RegNode {
    pub fn new(id: NodeId, parent: Option<NodeId>, children: Vec<NodeId>) -> Self {
        let k = children.len();
        Self {
            id,
            parent,
            children,
            up: Mark::Clean,
            child_marks: vec![Mark::Clean; k],
            finished: parent.is_none(),
            running_r: false,
            queued: Vec::new(),
            self_queued: false,
            phase: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn child_mark(&self, c: NodeId) -> Option<Mark> {
        self.children.iter().position(|&x| x == c).map(|i| self.child_marks[i])
    }

    fn any_dirty_child(&self) -> bool {
        self.child_marks.contains(&Mark::Dirty)
    }

    /// A registrant that has not deregistered keeps its path.
    fn active(&self) -> bool {
        matches!(self.phase, Some(Phase::Registering | Phase::Registered))
    }

    pub fn register(&mut self, out: &mut Out, ev: &mut Vec<RegEvent>) -> Result<()> {
        if self.phase.is_some() {
            return Err(violation(self.id, "registers twice in one instance"));
        }
        self.phase = Some(Phase::Registering);
        self.self_queued = true;
        self.invoke_r(out, ev);
        Ok(())
    }

    pub fn deregister(&mut self, now: Time, out: &mut Out, ev: &mut Vec<RegEvent>) -> Result<()> {
        if self.phase != Some(Phase::Registered) {
            return Err(violation(self.id, "deregisters without a completed registration"));
        }
        self.phase = Some(Phase::Deregistered);
        self.invoke_d(now, out, ev);
        Ok(())
    }

    fn invoke_r(&mut self, out: &mut Out, ev: &mut Vec<RegEvent>) {
        if self.finished {
            self.notify(out, ev);
            return;
        }
        if self.running_r {
            return;
        }
        self.running_r = true;
        let p = self.parent.expect("only the root is finished by fiat");
        if self.up == Mark::Dirty {
            out.push((p, RegMsg::InvokeR));
        } else {
            self.up = Mark::Dirty;
            out.push((p, RegMsg::MarkDirty));
        }
    }

    fn notify(&mut self, out: &mut Out, ev: &mut Vec<RegEvent>) {
        for c in self.queued.drain(..) {
            out.push((c, RegMsg::RDone));
        }
        if std::mem::take(&mut self.self_queued) {
            self.phase = Some(Phase::Registered);
            ev.push(RegEvent::Registered);
        }
    }

    fn invoke_d(&mut self, now: Time, out: &mut Out, ev: &mut Vec<RegEvent>) {
        if self.any_dirty_child() || self.active() {
            return;
        }
        match self.parent {
            None => self.issue(now, out, ev),
            Some(p) => {
                if self.up != Mark::Dirty {
                    return;
                }
                self.up = Mark::Waiting;
                self.finished = false;
                out.push((p, RegMsg::MarkWaiting));
            }
        }
    }

    /// Root issues Go-Ahead.
    fn issue(&mut self, now: Time, out: &mut Out, ev: &mut Vec<RegEvent>) {
        self.go_ahead(now, out, ev);
    }

    fn go_ahead(&mut self, issued: Time, out: &mut Out, ev: &mut Vec<RegEvent>) {
        if self.phase == Some(Phase::Deregistered) {
            self.phase = Some(Phase::Free);
            ev.push(RegEvent::Free { issued });
        }
        for (i, &c) in self.children.iter().enumerate() {
            if self.child_marks[i] == Mark::Waiting {
                self.child_marks[i] = Mark::Clean;
                out.push((c, RegMsg::GoAhead { issued }));
            }
        }
    }

    pub fn on_msg(&mut self, from: NodeId, msg: RegMsg, now: Time, out: &mut Out, ev: &mut Vec<RegEvent>) -> Result<()> {
        let child = self.children.iter().position(|&c| c == from);
        match msg {
            RegMsg::MarkDirty | RegMsg::InvokeR => {
                let i = child.ok_or_else(|| violation(self.id, format!("{msg:?} from non-child {from}")))?;
                self.child_marks[i] = Mark::Dirty;
                if !self.queued.contains(&from) {
                    self.queued.push(from);
                }
                self.invoke_r(out, ev);
            }
            RegMsg::RDone => {
                if Some(from) != self.parent || !self.running_r {
                    return Err(violation(self.id, "unexpected RDone"));
                }
                self.running_r = false;
                self.finished = true;
                self.notify(out, ev);
            }
            RegMsg::MarkWaiting => {
                let i = child.ok_or_else(|| violation(self.id, format!("MarkWaiting from non-child {from}")))?;
                self.child_marks[i] = Mark::Waiting;
                self.invoke_d(now, out, ev);
            }
            RegMsg::GoAhead { issued } => {
                if Some(from) != self.parent {
                    return Err(violation(self.id, "Go-Ahead from non-parent"));
                }
                if self.up == Mark::Waiting {
                    self.up = Mark::Clean;
                }
                self.go_ahead(issued, out, ev);
            }
        }
        Ok(())
    }
}
