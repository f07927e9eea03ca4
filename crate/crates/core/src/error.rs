use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("source set is empty")]
    EmptySources,
    #[error("graph is not weighted")]
    Unweighted,
    #[error("event cap of {cap} exceeded at time {time}")]
    EventCap { cap: u64, time: u64 },
    #[error("handler panic at node {node}: {message}; recent events: {trace:?}")]
    HandlerPanic { node: NodeId, message: String, trace: Vec<String> },
    #[error("model violation: {0}")]
    ModelViolation(String),
    #[error("protocol violation at node {node}: {what}")]
    Protocol { node: NodeId, what: String },
    #[error("no cover layer of radius at least {0}")]
    MissingCoverLayer(u64),
    #[error("invalid cover: {0}")]
    InvalidCover(String),
    #[error("pulse 0 has no registration radius")]
    PulseZero,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn violation(node: NodeId, what: impl Into<String>) -> Error {
    Error::Protocol { node, what: what.into() }
}
