mod run;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use netsync::sim::AdversarySpec;
use netsync::{generate, Error, GraphSpec, NetworkGraph, NodeId};

#[derive(Parser)]
#[command(name = "netsync", version, about = "Asynchronous network simulator with cover-based synchronizers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a generated graph as an edge list.
    Gen {
        /// `family:n:seed[:weighted]`
        #[arg(long)]
        graph: GraphSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm and write a JSON result.
    Run(RunArgs),
    /// Run one algorithm over a range of sizes and seeds; writes CSV.
    Sweep(SweepArgs),
    /// Build a sparse cover and check its invariants.
    VerifyCover {
        #[command(flatten)]
        graph: GraphArg,
        /// Cover radius.
        #[arg(long, default_value_t = 4)]
        radius: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct GraphArg {
    /// `family:n:seed[:weighted]`
    #[arg(long)]
    graph: Option<GraphSpec>,
    /// Edge-list file as written by `gen`.
    #[arg(long)]
    graph_file: Option<PathBuf>,
}

impl GraphArg {
    fn load(&self) -> anyhow::Result<NetworkGraph> {
        match (&self.graph, &self.graph_file) {
            (Some(spec), _) => Ok(generate(spec)?),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(NetworkGraph::from_edge_list(&text)?)
            }
            (None, None) => unreachable!("clap requires one graph source"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alg {
    Bfs,
    MultiBfs,
    Leader,
    Mst,
    SyncGeneric,
    AlphaBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationArg {
    Approach1,
    Approach2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Alpha,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, value_enum)]
    alg: Alg,
    /// `max-delay`, `uniform-random:SEED`, `edge-biased:SEED` or `lifo-queue:SEED`
    #[arg(long, default_value = "max-delay")]
    adversary: AdversarySpec,
    #[arg(long, value_enum, default_value = "approach2")]
    termination: TerminationArg,
    /// Comma-separated sources for `bfs` and `multi-bfs`.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    sources: Vec<NodeId>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    family: netsync::Family,
    #[arg(long = "n", value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "bfs")]
    alg: Alg,
    #[arg(long, default_value = "max-delay")]
    adversary: AdversarySpec,
    #[arg(long, value_enum, default_value = "approach2")]
    termination: TerminationArg,
    /// Graph seeds; each also reseeds a randomised adversary.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Also run the α synchronizer on a flood from node 0.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Exit status: 0 pass, 1 invariant failure, 2 usage error.
fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.cmd {
        Cmd::Gen { graph, out } => {
            write_out(out.as_deref(), &generate(&graph)?.to_edge_list())?;
            Ok(true)
        }
        Cmd::Run(a) => {
            let g = a.graph.load()?;
            let cfg = run::Config { alg: a.alg, adversary: a.adversary, termination: a.termination, sources: a.sources };
            let rec = run::run(&g, &cfg)?;
            write_out(a.out.as_deref(), &(serde_json::to_string_pretty(&rec)? + "\n"))?;
            for c in rec.invariant_report.iter().filter(|c| !c.pass) {
                eprintln!("invariant failed: {}: {}", c.name, c.detail);
            }
            Ok(rec.pass())
        }
        Cmd::Sweep(a) => {
            if a.seeds.is_empty() {
                return Err(Error::Usage("seed list is empty".into()).into());
            }
            let plan = sweep::Plan {
                family: a.family,
                sizes: a.sizes,
                alg: a.alg,
                adversary: a.adversary,
                termination: a.termination,
                seeds: a.seeds,
                baseline: a.baseline.is_some(),
            };
            let rows = sweep::sweep(&plan)?;
            write_out(a.out.as_deref(), &sweep::to_csv(&rows)?)?;
            Ok(rows.iter().all(|r| r.pass))
        }
        Cmd::VerifyCover { graph, radius, out } => {
            let g = graph.load()?;
            let report = run::verify_cover(&g, radius)?;
            write_out(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<Error>(), Some(Error::Usage(_) | Error::EmptySources | Error::Unweighted));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
