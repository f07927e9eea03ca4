//! Single runs: dispatch, oracle checks and the JSON record.

use std::collections::BTreeSet;

use netsync::apps::{bfs_app, election_epochs, leader_election, mst, mst_edges, Flood};
use netsync::bfs::{complete_bfs_multi, Termination};
use netsync::cover::{build_cover, verify_cover as check_cover, verify_decomposition, CoverReport, SyncRunner};
use netsync::graph::{bfs_oracle, mst_oracle};
use netsync::sim::{AdversarySpec, RunMetrics};
use netsync::synchronizer::{alpha_synchronize, synchronize, Mode};
use netsync::{Error, NetworkGraph, NodeId};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Alg, TerminationArg};

pub struct Config {
    pub alg: Alg,
    pub adversary: AdversarySpec,
    pub termination: TerminationArg,
    pub sources: Vec<NodeId>,
}

#[derive(Debug, Serialize)]
pub struct Invariant {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn invariant(name: &'static str, pass: bool, detail: impl Into<String>) -> Invariant {
    Invariant { name, pass, detail: if pass { String::new() } else { detail.into() } }
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub alg: Alg,
    pub n: usize,
    pub m: usize,
    pub metrics: RunMetrics,
    pub outputs: Value,
    /// `None` for algorithms that are not wrapped lockstep programs.
    pub sync_equivalence: Option<bool>,
    pub invariant_report: Vec<Invariant>,
    pub log_digest: String,
    pub details: Value,
}

impl RunRecord {
    pub fn pass(&self) -> bool {
        self.invariant_report.iter().all(|c| c.pass)
    }
}

fn termination(t: TerminationArg) -> Termination {
    match t {
        TerminationArg::Approach1 => Termination::Approach1,
        TerminationArg::Approach2 => Termination::Approach2,
    }
}

fn equivalence(ok: bool) -> Invariant {
    invariant("sync-equivalence", ok, "wrapped messages or outputs differ from the lockstep run")
}

pub fn run(g: &NetworkGraph, cfg: &Config) -> anyhow::Result<RunRecord> {
    let adv = &cfg.adversary;
    let base = |metrics, outputs, sync_equivalence, invariant_report, log_digest, details| RunRecord {
        alg: cfg.alg,
        n: g.n(),
        m: g.m(),
        metrics,
        outputs,
        sync_equivalence,
        invariant_report,
        log_digest,
        details,
    };
    Ok(match cfg.alg {
        Alg::Bfs | Alg::MultiBfs => {
            let sources: &[NodeId] = match cfg.alg {
                Alg::Bfs => cfg.sources.get(..1).ok_or(Error::EmptySources)?,
                _ => &cfg.sources,
            };
            let out = if cfg.termination == TerminationArg::Approach2 {
                bfs_app(g, sources, adv)?
            } else {
                complete_bfs_multi(g, sources, termination(cfg.termination), adv)?
            };
            let oracle = bfs_oracle(g, sources)?;
            let want: Vec<Option<u32>> = oracle.dist.iter().copied().map(Some).collect();
            let tree_ok = (0..g.n()).all(|v| match out.parent[v] {
                Some(p) => out.dist[p as usize].zip(out.dist[v]).is_some_and(|(a, b)| a + 1 == b),
                None => out.dist[v].is_none() || sources.contains(&(v as NodeId)),
            });
            let rows: Vec<Value> =
                (0..g.n()).map(|v| json!({ "node": v, "dist": out.dist[v], "parent": out.parent[v] })).collect();
            let checks = vec![
                invariant("bfs-distances", out.dist == want, "distances differ from the BFS oracle"),
                invariant("bfs-tree", tree_ok, "a parent is not one hop closer to the sources"),
            ];
            let details = json!({ "iterations": out.iterations, "layers": out.layers, "engine": out.stats, "termination": cfg.termination });
            base(out.metrics, Value::Array(rows), None, checks, out.log_digest, details)
        }
        Alg::Leader => {
            let out = leader_election(g, adv)?;
            let min = (g.n() > 0).then_some(0);
            let agreed = out.outputs.iter().all(|&o| o == min);
            let checks = vec![
                equivalence(out.sync_equivalence),
                invariant("leader-agreement", agreed, "some node did not output the minimum id"),
            ];
            let details = json!({ "epochs": election_epochs(&out), "iterations": out.iterations, "rounds": out.rounds, "layers": out.layers });
            base(out.metrics, json!(out.outputs), Some(out.sync_equivalence), checks, out.log_digest, details)
        }
        Alg::Mst => {
            let out = mst(g, adv)?;
            let got = mst_edges(&out);
            let want: BTreeSet<(NodeId, NodeId)> = mst_oracle(g)?.edges.into_iter().collect();
            let checks = vec![equivalence(out.sync_equivalence), invariant("mst-exact", got == want, "edge set differs from Kruskal")];
            let details = json!({ "iterations": out.iterations, "rounds": out.rounds, "layers": out.layers });
            base(out.metrics, json!(got), Some(out.sync_equivalence), checks, out.log_digest, details)
        }
        Alg::SyncGeneric => {
            let out = synchronize(g, Flood::for_graph(g, &[0]), Mode::UnknownT, adv)?;
            let checks = vec![equivalence(out.sync_equivalence)];
            let details = json!({ "iterations": out.iterations, "rounds": out.rounds, "layers": out.layers, "engine": out.stats });
            base(out.metrics, json!(out.outputs), Some(out.sync_equivalence), checks, out.log_digest, details)
        }
        Alg::AlphaBaseline => {
            let out = alpha_synchronize(g, Flood::for_graph(g, &[0]), adv)?;
            let checks = vec![equivalence(out.sync_equivalence)];
            let details = json!({ "rounds": out.rounds });
            base(out.metrics, json!(out.outputs), Some(out.sync_equivalence), checks, out.log_digest, details)
        }
    })
}

#[derive(Debug, Serialize)]
pub struct CoverVerdict {
    pub pass: bool,
    pub radius: u32,
    pub clusters: usize,
    pub colors: usize,
    pub cover: CoverReport,
    pub decomposition: CoverReport,
}

/// Builds a `radius`-cover with the lockstep runner and checks both it and its decomposition.
pub fn verify_cover(g: &NetworkGraph, radius: u32) -> anyhow::Result<CoverVerdict> {
    let mask = vec![true; g.n()];
    let (cover, dec, _) = build_cover(g, &mask, radius, &mut SyncRunner::default())?;
    let c = check_cover(g, &cover, None);
    let d = verify_decomposition(g, &dec, None);
    Ok(CoverVerdict { pass: c.pass() && d.pass(), radius, clusters: cover.clusters.len(), colors: dec.colors.len(), cover: c, decomposition: d })
}
