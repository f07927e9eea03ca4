//! Undirected simple graphs, deterministic generators and brute-force oracles.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    adj: Vec<Vec<NodeId>>,
    /// Keyed by `(min, max)` endpoint pair.
    weights: Option<BTreeMap<(NodeId, NodeId), u64>>,
}

fn key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl NetworkGraph {
    /// Builds a graph from an edge list, rejecting loops, duplicates and out-of-range ids.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            if !seen.insert(key(u, v)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u},{v})")));
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { adj, weights: None })
    }

    pub fn from_weighted_edges(n: usize, edges: &[(NodeId, NodeId, u64)]) -> Result<Self> {
        let plain: Vec<_> = edges.iter().map(|&(u, v, _)| (u, v)).collect();
        let mut g = Self::from_edges(n, &plain)?;
        let mut w = BTreeMap::new();
        for &(u, v, x) in edges {
            if x == 0 {
                return Err(Error::InvalidGraph("weights must be positive".into()));
            }
            w.insert(key(u, v), x);
        }
        g.weights = Some(w);
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v as usize].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.weights.as_ref()?.get(&key(u, v)).copied()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.m());
        for (u, list) in self.adj.iter().enumerate() {
            let u = u as NodeId;
            out.extend(list.iter().filter(|&&v| u < v).map(|&v| (u, v)));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return true;
        }
        let mut uf = UnionFind::new(self.n());
        let mut parts = self.n();
        for (u, v) in self.edges() {
            if uf.union(u as usize, v as usize) {
                parts -= 1;
            }
        }
        parts == 1
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n(), self.m(), self.is_weighted());
        for (u, v) in self.edges() {
            match self.weight(u, v) {
                Some(w) => s.push_str(&format!("{u} {v} {w}\n")),
                None => s.push_str(&format!("{u} {v}\n")),
            }
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidGraph(msg.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header"))?.split_whitespace().collect();
        if header.len() != 3 {
            return Err(bad("header must be `n m weighted`"));
        }
        let n: usize = header[0].parse().map_err(|_| bad("bad n"))?;
        let m: usize = header[1].parse().map_err(|_| bad("bad m"))?;
        let weighted: bool = header[2].parse().map_err(|_| bad("bad weighted flag"))?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let f: Vec<u64> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad edge line")))
                .collect::<Result<_>>()?;
            match (weighted, f.as_slice()) {
                (false, [u, v]) => edges.push((*u as NodeId, *v as NodeId, 1)),
                (true, [u, v, w]) => edges.push((*u as NodeId, *v as NodeId, *w)),
                _ => return Err(bad("edge line arity does not match header")),
            }
        }
        if edges.len() != m {
            return Err(bad("edge count does not match header"));
        }
        if weighted {
            Self::from_weighted_edges(n, &edges)
        } else {
            let plain: Vec<_> = edges.iter().map(|&(u, v, _)| (u, v)).collect();
            Self::from_edges(n, &plain)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Path,
    Cycle,
    Grid,
    RandomConnected,
    BalancedTree,
    Complete,
    Star,
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "path" => Family::Path,
            "cycle" => Family::Cycle,
            "grid" => Family::Grid,
            "random-connected" | "random" => Family::RandomConnected,
            "balanced-tree" | "tree" => Family::BalancedTree,
            "complete" => Family::Complete,
            "star" => Family::Star,
            other => return Err(Error::Usage(format!("unsupported graph family `{other}`"))),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Grid => "grid",
            Family::RandomConnected => "random-connected",
            Family::BalancedTree => "balanced-tree",
            Family::Complete => "complete",
            Family::Star => "star",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    pub weighted: bool,
}

impl GraphSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        Self { family, n, seed, weighted: false }
    }

    pub fn weighted(mut self) -> Self {
        self.weighted = true;
        self
    }
}

/// Parses `family:n:seed[:weighted]`.
impl FromStr for GraphSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 2 || parts.len() > 4 {
            return Err(Error::Usage(format!("graph spec `{s}` must be family:n:seed[:weighted]")));
        }
        let family = parts[0].parse()?;
        let n = parts[1].parse().map_err(|_| Error::Usage(format!("bad node count in `{s}`")))?;
        let seed = match parts.get(2) {
            Some(x) => x.parse().map_err(|_| Error::Usage(format!("bad seed in `{s}`")))?,
            None => 0,
        };
        let weighted = match parts.get(3) {
            None => false,
            Some(&"weighted") | Some(&"w") => true,
            Some(other) => return Err(Error::Usage(format!("unknown graph flag `{other}`"))),
        };
        Ok(Self { family, n, seed, weighted })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.family, self.n, self.seed)?;
        if self.weighted {
            f.write_str(":weighted")?;
        }
        Ok(())
    }
}

pub fn generate(spec: &GraphSpec) -> Result<NetworkGraph> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::Usage("graph needs at least one node".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nn = n as NodeId;
    let mut edges: Vec<(NodeId, NodeId)> = match spec.family {
        Family::Path => (1..nn).map(|v| (v - 1, v)).collect(),
        Family::Cycle => {
            let mut e: Vec<_> = (1..nn).map(|v| (v - 1, v)).collect();
            if n >= 3 {
                e.push((nn - 1, 0));
            }
            e
        }
        Family::Grid => {
            // Row-major with width ⌈√n⌉; a partial last row stays attached upward.
            let w = (1..).find(|w: &usize| w * w >= n).unwrap() as NodeId;
            let mut e = Vec::new();
            for v in 0..nn {
                if v % w != 0 {
                    e.push((v - 1, v));
                }
                if v >= w {
                    e.push((v - w, v));
                }
            }
            e
        }
        Family::BalancedTree => (1..nn).map(|v| ((v - 1) / 2, v)).collect(),
        Family::Complete => {
            let mut e = Vec::new();
            for u in 0..nn {
                for v in u + 1..nn {
                    e.push((u, v));
                }
            }
            e
        }
        Family::Star => (1..nn).map(|v| (0, v)).collect(),
        Family::RandomConnected => {
            let mut order: Vec<NodeId> = (0..nn).collect();
            order.shuffle(&mut rng);
            let mut set = BTreeSet::new();
            for i in 1..n {
                let j = rng.gen_range(0..i);
                set.insert(key(order[i], order[j]));
            }
            let max_edges = n * (n - 1) / 2;
            let target = (set.len() + n / 2).min(max_edges);
            while set.len() < target {
                let u = rng.gen_range(0..nn);
                let v = rng.gen_range(0..nn);
                if u != v {
                    set.insert(key(u, v));
                }
            }
            set.into_iter().collect()
        }
    };
    edges.sort_unstable();
    if spec.weighted {
        let mut perm: Vec<u64> = (1..=edges.len() as u64).collect();
        perm.shuffle(&mut rng);
        let weighted: Vec<_> = edges.iter().zip(perm).map(|(&(u, v), w)| (u, v, w)).collect();
        NetworkGraph::from_weighted_edges(n, &weighted)
    } else {
        NetworkGraph::from_edges(n, &edges)
    }
}

/// Hop distances from a source set, restricted to `mask` when given.
pub fn multi_source_distances(g: &NetworkGraph, sources: &[NodeId], mask: Option<&[bool]>) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.n()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s as usize].is_none() {
            dist[s as usize] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u as usize].unwrap();
        for &v in g.neighbors(u) {
            if mask.is_some_and(|m| !m[v as usize]) {
                continue;
            }
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BfsOracle {
    pub dist: Vec<u32>,
    /// max over v of dist(v, S).
    pub d1: u32,
}

pub fn bfs_oracle(g: &NetworkGraph, sources: &[NodeId]) -> Result<BfsOracle> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    if let Some(&s) = sources.iter().find(|&&s| s as usize >= g.n()) {
        return Err(Error::InvalidGraph(format!("source {s} out of range")));
    }
    let dist: Vec<u32> = multi_source_distances(g, sources, None)
        .into_iter()
        .map(|d| d.ok_or_else(|| Error::InvalidGraph("graph is disconnected".into())))
        .collect::<Result<_>>()?;
    let d1 = dist.iter().copied().max().unwrap_or(0);
    Ok(BfsOracle { dist, d1 })
}

pub fn eccentricity(g: &NetworkGraph, v: NodeId) -> u32 {
    multi_source_distances(g, &[v], None).into_iter().flatten().max().unwrap_or(0)
}

pub fn diameter(g: &NetworkGraph) -> u32 {
    (0..g.n() as NodeId).map(|v| eccentricity(g, v)).max().unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MstOracle {
    pub edges: BTreeSet<(NodeId, NodeId)>,
    pub total_weight: u64,
}

/// Kruskal over the distinct weights.
pub fn mst_oracle(g: &NetworkGraph) -> Result<MstOracle> {
    if !g.is_weighted() {
        return Err(Error::Unweighted);
    }
    let mut edges: Vec<(u64, NodeId, NodeId)> =
        g.edges().into_iter().map(|(u, v)| (g.weight(u, v).unwrap(), u, v)).collect();
    edges.sort_unstable();
    if edges.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidGraph("edge weights must be distinct".into()));
    }
    let mut uf = UnionFind::new(g.n());
    let mut out = MstOracle { edges: BTreeSet::new(), total_weight: 0 };
    for (w, u, v) in edges {
        if uf.union(u as usize, v as usize) {
            out.edges.insert((u, v));
            out.total_weight += w;
        }
    }
    Ok(out)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gen(f: Family, n: usize, seed: u64) -> NetworkGraph {
        generate(&GraphSpec::new(f, n, seed)).unwrap()
    }

    #[test]
    fn path_edges() {
        let g = gen(Family::Path, 5, 0);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn complete_three_has_three_edges() {
        assert_eq!(gen(Family::Complete, 3, 0).m(), 3);
    }

    #[test]
    fn random_is_connected_and_reproducible() {
        let a = gen(Family::RandomConnected, 64, 7);
        assert!(a.is_connected());
        assert_eq!(a, gen(Family::RandomConnected, 64, 7));
        assert_ne!(a, gen(Family::RandomConnected, 64, 8));
    }

    #[test]
    fn oracle_examples() {
        let p = gen(Family::Path, 5, 0);
        assert_eq!(bfs_oracle(&p, &[0]).unwrap().dist, vec![0, 1, 2, 3, 4]);
        let all: Vec<NodeId> = (0..5).collect();
        assert_eq!(bfs_oracle(&p, &all).unwrap().d1, 0);
        let grid = gen(Family::Grid, 16, 0);
        assert_eq!(bfs_oracle(&grid, &[0]).unwrap().d1, 6);
        assert!(matches!(bfs_oracle(&p, &[]), Err(Error::EmptySources)));
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&gen(Family::Path, 5, 0)), 4);
        assert_eq!(diameter(&gen(Family::Complete, 8, 0)), 1);
        assert_eq!(diameter(&gen(Family::Cycle, 10, 0)), 5);
    }

    #[test]
    fn mst_examples() {
        let tri = NetworkGraph::from_weighted_edges(3, &[(0, 1, 1), (1, 2, 2), (0, 2, 3)]).unwrap();
        let o = mst_oracle(&tri).unwrap();
        assert_eq!(o.total_weight, 3);
        assert_eq!(o.edges, [(0, 1), (1, 2)].into_iter().collect());
        let tree = generate(&GraphSpec::new(Family::BalancedTree, 15, 1).weighted()).unwrap();
        assert_eq!(mst_oracle(&tree).unwrap().edges.len(), 14);
        assert!(matches!(mst_oracle(&gen(Family::Path, 3, 0)), Err(Error::Unweighted)));
    }

    /// Prim's algorithm as an independent cross-check of Kruskal.
    fn prim_weight(g: &NetworkGraph) -> u64 {
        let mut in_tree = vec![false; g.n()];
        in_tree[0] = true;
        let mut total = 0;
        for _ in 1..g.n() {
            let (w, v) = g
                .edges()
                .into_iter()
                .filter(|&(a, b)| in_tree[a as usize] != in_tree[b as usize])
                .map(|(a, b)| (g.weight(a, b).unwrap(), if in_tree[a as usize] { b } else { a }))
                .min()
                .unwrap();
            in_tree[v as usize] = true;
            total += w;
        }
        total
    }

    #[test]
    fn kruskal_matches_prim() {
        let g = generate(&GraphSpec::new(Family::RandomConnected, 32, 3).weighted()).unwrap();
        assert_eq!(mst_oracle(&g).unwrap().total_weight, prim_weight(&g));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate(&GraphSpec::new(Family::Grid, 10, 2).weighted()).unwrap();
        assert_eq!(NetworkGraph::from_edge_list(&g.to_edge_list()).unwrap(), g);
        let h = gen(Family::Cycle, 6, 0);
        assert_eq!(NetworkGraph::from_edge_list(&h.to_edge_list()).unwrap(), h);
    }

    #[test]
    fn spec_parsing() {
        let s: GraphSpec = "random-connected:64:7:weighted".parse().unwrap();
        assert_eq!(s, GraphSpec::new(Family::RandomConnected, 64, 7).weighted());
        assert!("hexagon:4:1".parse::<GraphSpec>().is_err());
        assert_eq!(s.to_string().parse::<GraphSpec>().unwrap(), s);
    }

    fn family() -> impl Strategy<Value = Family> {
        prop_oneof![
            Just(Family::Path),
            Just(Family::Cycle),
            Just(Family::Grid),
            Just(Family::RandomConnected),
            Just(Family::BalancedTree),
            Just(Family::Complete),
            Just(Family::Star),
        ]
    }

    proptest! {
        #[test]
        fn generated_graphs_are_simple_connected(f in family(), n in 1usize..60, seed: u64) {
            let g = gen(f, n, seed);
            prop_assert!(g.is_connected());
            for u in 0..n as NodeId {
                for &v in g.neighbors(u) {
                    prop_assert!(v != u);
                    prop_assert!(g.has_edge(v, u));
                }
            }
        }

        #[test]
        fn bfs_is_triangle_consistent(f in family(), n in 1usize..60, seed: u64) {
            let g = gen(f, n, seed);
            let s = (seed % n as u64) as NodeId;
            let d = bfs_oracle(&g, &[s]).unwrap().dist;
            for (u, v) in g.edges() {
                prop_assert!(d[u as usize].abs_diff(d[v as usize]) <= 1);
            }
        }

        #[test]
        fn mst_beats_random_spanning_trees(n in 2usize..10, seed: u64) {
            let g = generate(&GraphSpec::new(Family::RandomConnected, n, seed).weighted()).unwrap();
            let o = mst_oracle(&g).unwrap();
            prop_assert_eq!(o.edges.len(), n - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for _ in 0..100 {
                let mut es = g.edges();
                es.shuffle(&mut rng);
                let mut uf = UnionFind::new(n);
                let w: u64 = es
                    .into_iter()
                    .filter(|&(u, v)| uf.union(u as usize, v as usize))
                    .map(|(u, v)| g.weight(u, v).unwrap())
                    .sum();
                prop_assert!(o.total_weight <= w);
            }
        }
    }
}
