//! Deterministic simulation of asynchronous message-passing networks, with a
//! sparse-cover based synchronizer stack and a lockstep synchronous oracle.

pub mod error;
pub mod graph;
pub mod pulse;
pub mod sim;
pub mod sync_rt;
pub mod apps;
pub mod cluster;
pub mod cover;
pub mod engine;
pub mod bfs;
pub mod synchronizer;

pub use error::{Error, Result};
pub use graph::{generate, Family, GraphSpec, NetworkGraph, NodeId};
