use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::{log_n, NetworkDecomposition, SparseCover};
use crate::cluster::ClusterTree;
use crate::graph::{NetworkGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Pass/fail per invariant plus the measured constants behind the asymptotic bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CoverReport {
    pub checks: Vec<Check>,
    /// Max memberships per node over `log n`.
    pub c_mem: f64,
    /// Max tree depth over `d · log^3 n` (or `k · log^3 n` for decompositions).
    pub c_str: f64,
    /// Max trees per edge over `log^4 n`.
    pub c_tree: f64,
    /// Colours over `log n`; decompositions only.
    pub c_color: f64,
    pub max_membership: usize,
    pub max_depth: u32,
    pub max_edge_load: usize,
}

impl CoverReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    fn check(&mut self, name: &'static str, result: Result<(), String>) {
        let (pass, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        self.checks.push(Check { name, pass, detail });
    }

    fn measure(&mut self, n: usize, trees: &[&ClusterTree], scale: f64) {
        let l = log_n(n) as f64;
        let mut mem = vec![0usize; n];
        let mut load: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
        for t in trees {
            for &v in &t.members {
                mem[v as usize] += 1;
            }
            for (&c, &p) in &t.parent {
                *load.entry((c.min(p), c.max(p))).or_default() += 1;
            }
            self.max_depth = self.max_depth.max(t.depth());
        }
        self.max_membership = mem.into_iter().max().unwrap_or(0);
        self.max_edge_load = load.into_values().max().unwrap_or(0);
        self.c_mem = self.max_membership as f64 / l;
        self.c_str = self.max_depth as f64 / (scale.max(1.0) * l.powi(3));
        self.c_tree = self.max_edge_load as f64 / l.powi(4);
    }
}

fn ball(g: &NetworkGraph, mask: &[bool], from: &[NodeId], radius: u64) -> Vec<NodeId> {
    let mut dist = vec![u64::MAX; g.n()];
    let mut q = VecDeque::new();
    let mut out = Vec::new();
    for &s in from {
        if dist[s as usize] == u64::MAX {
            dist[s as usize] = 0;
            q.push_back(s);
        }
    }
    while let Some(u) = q.pop_front() {
        out.push(u);
        let d = dist[u as usize];
        if d == radius {
            continue;
        }
        for &v in g.neighbors(u) {
            if mask[v as usize] && dist[v as usize] == u64::MAX {
                dist[v as usize] = d + 1;
                q.push_back(v);
            }
        }
    }
    out
}

fn all_mask(n: usize, mask: Option<&[bool]>) -> Vec<bool> {
    mask.map_or_else(|| vec![true; n], <[bool]>::to_vec)
}

fn validate_trees<'a>(g: &NetworkGraph, trees: impl IntoIterator<Item = &'a ClusterTree>) -> Result<(), String> {
    for t in trees {
        t.validate(g).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Checks a cover of the subgraph induced by `mask` (whole graph if `None`).
pub fn verify_cover(g: &NetworkGraph, cover: &SparseCover, mask: Option<&[bool]>) -> CoverReport {
    let n = g.n();
    let mask = all_mask(n, mask);
    let mut r = CoverReport::default();
    r.check("trees", validate_trees(g, &cover.clusters));
    let mut ids: Vec<_> = cover.clusters.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    ids.dedup();
    r.check(
        "ids",
        if ids.len() == cover.clusters.len() { Ok(()) } else { Err("duplicate cluster ids".into()) },
    );
    r.check(
        "inside-mask",
        cover
            .clusters
            .iter()
            .find_map(|c| c.members.iter().find(|&&v| !mask[v as usize]).map(|v| format!("cluster {} has outside node {v}", c.id)))
            .map_or(Ok(()), Err),
    );
    let memberships = cover.memberships(n);
    let coverage = (0..n as NodeId).filter(|&v| mask[v as usize]).find_map(|v| {
        let b = ball(g, &mask, &[v], cover.radius);
        let ok = memberships[v as usize].iter().any(|&c| {
            let t = cover.clusters.iter().find(|t| t.id == c).unwrap();
            b.iter().all(|u| t.members.contains(u))
        });
        (!ok).then(|| format!("the {}-ball of node {v} lies in no cluster", cover.radius))
    });
    r.check("coverage", coverage.map_or(Ok(()), Err));
    let trees: Vec<&ClusterTree> = cover.clusters.iter().collect();
    r.measure(n, &trees, cover.radius as f64);
    r
}

/// Checks a decomposition of the subgraph induced by `mask` (whole graph if `None`).
pub fn verify_decomposition(g: &NetworkGraph, dec: &NetworkDecomposition, mask: Option<&[bool]>) -> CoverReport {
    let n = g.n();
    let mask = all_mask(n, mask);
    let mut r = CoverReport::default();
    r.check("trees", validate_trees(g, dec.colors.iter().flatten()));
    let mut seen = vec![0u32; n];
    for t in dec.colors.iter().flatten() {
        for &v in &t.members {
            seen[v as usize] += 1;
        }
    }
    let partition = (0..n).find_map(|v| match (mask[v], seen[v]) {
        (true, 1) | (false, 0) => None,
        (true, c) => Some(format!("node {v} is in {c} clusters")),
        (false, _) => Some(format!("node {v} is outside the decomposed set")),
    });
    r.check("partition", partition.map_or(Ok(()), Err));
    let k = dec.separation as u64;
    let mut sep = Ok(());
    'outer: for (c, clusters) in dec.colors.iter().enumerate() {
        let mut owner = vec![u32::MAX; n];
        for t in clusters {
            for &v in &t.members {
                owner[v as usize] = t.id;
            }
        }
        for t in clusters {
            let from: Vec<NodeId> = t.members.iter().copied().collect();
            if let Some(&u) = ball(g, &vec![true; n], &from, k).iter().find(|&&u| owner[u as usize] != u32::MAX && owner[u as usize] != t.id) {
                sep = Err(format!("colour {c}: cluster {} is within {k} of cluster {} (node {u})", t.id, owner[u as usize]));
                break 'outer;
            }
        }
    }
    r.check("separation", sep);
    let trees: Vec<&ClusterTree> = dec.colors.iter().flatten().collect();
    r.measure(n, &trees, k as f64);
    r.c_color = dec.colors.len() as f64 / log_n(n) as f64;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family, GraphSpec};

    fn path8() -> NetworkGraph {
        generate(&GraphSpec::new(Family::Path, 8, 0)).unwrap()
    }

    fn window(id: u32, a: NodeId, b: NodeId) -> ClusterTree {
        ClusterTree { id, root: a, parent: (a + 1..=b).map(|v| (v, v - 1)).collect(), members: (a..=b).collect() }
    }

    #[test]
    fn hand_built_path_cover_passes() {
        let g = path8();
        let cover = SparseCover { radius: 1, clusters: vec![window(0, 0, 3), window(1, 2, 5), window(2, 4, 7)] };
        let r = verify_cover(&g, &cover, None);
        assert!(r.pass(), "{:?}", r.failures());
        assert_eq!(r.max_membership, 2);
        assert_eq!(r.max_depth, 3);
    }

    #[test]
    fn uncovered_ball_names_witness() {
        let g = path8();
        let cover = SparseCover { radius: 1, clusters: vec![window(0, 0, 3), window(1, 4, 7)] };
        let r = verify_cover(&g, &cover, None);
        let f = r.failures();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].name, "coverage");
        assert!(f[0].detail.contains("node 3"), "{}", f[0].detail);
    }

    #[test]
    fn close_same_colour_clusters_fail_separation() {
        let g = path8();
        let dec = NetworkDecomposition { separation: 2, colors: vec![vec![window(0, 0, 2), window(1, 5, 7)], vec![window(2, 3, 4)]] };
        assert!(verify_decomposition(&g, &dec, None).pass());
        let tight = NetworkDecomposition { separation: 2, colors: vec![vec![window(0, 0, 2), window(1, 4, 7)], vec![window(2, 3, 3)]] };
        let r = verify_decomposition(&g, &tight, None);
        assert_eq!(r.failures().iter().map(|c| c.name).collect::<Vec<_>>(), vec!["separation"]);
    }

    #[test]
    fn missing_node_breaks_partition() {
        let g = path8();
        let dec = NetworkDecomposition { separation: 1, colors: vec![vec![window(0, 0, 6)]] };
        assert!(!verify_decomposition(&g, &dec, None).pass());
    }
}
