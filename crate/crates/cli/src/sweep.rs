//! Overhead sweeps: one CSV row per (n, seed).

use netsync::graph::diameter;
use netsync::sim::{AdversarySpec, RunMetrics};
use netsync::{generate, Family, GraphSpec, NodeId};
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{run, Config};
use crate::{Alg, TerminationArg};

pub struct Plan {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub alg: Alg,
    pub adversary: AdversarySpec,
    pub termination: TerminationArg,
    pub seeds: Vec<u64>,
    pub baseline: bool,
}

/// Column order is the CSV header; keep it stable.
#[derive(Debug, Serialize)]
pub struct Row {
    pub n: usize,
    pub seed: u64,
    pub m: usize,
    #[serde(rename = "D")]
    pub diameter: u32,
    pub messages_total: u64,
    pub msg_app: u64,
    pub msg_safety: u64,
    pub msg_register: u64,
    pub msg_cover: u64,
    pub msg_termination: u64,
    pub msg_other: u64,
    pub normalized_time: String,
    pub overhead_ratio: String,
    pub alpha_messages_total: Option<u64>,
    pub alpha_overhead_ratio: Option<String>,
    pub pass: bool,
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// Folds the fine-grained categories into the fixed CSV columns.
fn columns(m: &RunMetrics) -> [u64; 6] {
    let mut c = [0u64; 6];
    for (k, &v) in &m.messages_by_category {
        let i = match k.as_str() {
            "app" | "answer" => 0,
            "safety" => 1,
            "register" => 2,
            k if k.starts_with("cover") || k == "alpha-cover" || k == "tally" || k == "span-check" => 3,
            "termination" | "check" => 4,
            _ => 5,
        };
        c[i] += v;
    }
    c
}

fn sources(alg: Alg, n: usize) -> Vec<NodeId> {
    match alg {
        Alg::MultiBfs => (0..n as NodeId).step_by(8).collect(),
        _ => vec![0],
    }
}

/// The row seed also reseeds a randomised adversary.
fn reseed(adv: &AdversarySpec, seed: u64) -> AdversarySpec {
    match adv.clone() {
        AdversarySpec::MaxDelay => AdversarySpec::MaxDelay,
        AdversarySpec::UniformRandom { .. } => AdversarySpec::UniformRandom { seed },
        AdversarySpec::EdgeBiased { eps, slow, .. } => AdversarySpec::EdgeBiased { seed, eps, slow },
        AdversarySpec::LifoQueue { .. } => AdversarySpec::LifoQueue { seed },
    }
}

fn one(plan: &Plan, n: usize, seed: u64) -> anyhow::Result<Row> {
    let g = generate(&GraphSpec { family: plan.family, n, seed, weighted: plan.alg == Alg::Mst })?;
    let cfg = Config { alg: plan.alg, adversary: reseed(&plan.adversary, seed), termination: plan.termination, sources: sources(plan.alg, n) };
    let rec = run(&g, &cfg)?;
    let m = g.m().max(1) as f64;
    let alpha = if plan.baseline {
        let a = run(&g, &Config { alg: Alg::AlphaBaseline, ..cfg })?;
        Some(a.metrics.messages_total)
    } else {
        None
    };
    let c = columns(&rec.metrics);
    Ok(Row {
        n,
        seed,
        m: g.m(),
        diameter: diameter(&g),
        messages_total: rec.metrics.messages_total,
        msg_app: c[0],
        msg_safety: c[1],
        msg_register: c[2],
        msg_cover: c[3],
        msg_termination: c[4],
        msg_other: c[5],
        normalized_time: fixed(rec.metrics.normalized_time),
        overhead_ratio: fixed(rec.metrics.messages_total as f64 / m),
        alpha_messages_total: alpha,
        alpha_overhead_ratio: alpha.map(|a| fixed(a as f64 / m)),
        pass: rec.pass(),
    })
}

pub fn sweep(plan: &Plan) -> anyhow::Result<Vec<Row>> {
    let mut jobs: Vec<(usize, u64)> = plan.sizes.iter().flat_map(|&n| plan.seeds.iter().map(move |&s| (n, s))).collect();
    jobs.sort_unstable();
    jobs.dedup();
    jobs.into_par_iter().map(|(n, s)| one(plan, n, s)).collect()
}

pub fn to_csv(rows: &[Row]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
