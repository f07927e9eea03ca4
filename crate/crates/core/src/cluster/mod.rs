//! Communication on cluster trees: convergecasts and registration.

pub mod convergecast;
pub mod registration;
pub mod tree;

pub use convergecast::{done_convergecast, done_convergecast_extended, tree_aggregate, DoneSource};
pub use registration::{Mark, RegEvent, RegMsg, RegNode};
pub use tree::{local_views, ClusterId, ClusterTree, TreeView};

use crate::sim::Tag;

/// Procedure tags: 4 bits of kind, 28 bits of cluster, 32 bits of pulse or stage.
pub(crate) fn tag(kind: u8, cluster: u32, pulse: u32) -> Tag {
    ((kind as u64) << 60) | (((cluster as u64) & 0x0fff_ffff) << 32) | pulse as u64
}

pub(crate) mod kind {
    pub const APP: u8 = 1;
    pub const ANSWER: u8 = 2;
    pub const SAFE: u8 = 3;
    pub const GO: u8 = 4;
    pub const REG: u8 = 5;
    pub const SRC: u8 = 6;
    pub const DONE: u8 = 7;
    pub const AGG: u8 = 8;
    pub const SPAN: u8 = 9;
    pub const ALPHA_SAFE: u8 = 10;
    pub const QUERY: u8 = 11;
}
