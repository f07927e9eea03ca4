//! Deterministic weak-diameter decomposition by bit phases, and the cover
//! built from it by growing every cluster by its `d`-ball.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{log_n, NetworkDecomposition, SparseCover};
use crate::cluster::{ClusterId, ClusterTree};
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};

/// How a node was reached by a labelled multi-source BFS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Reach {
    pub label: u32,
    /// Neighbour one step closer that carried `label`; `None` at sources.
    pub parent: Option<NodeId>,
    pub dist: u32,
}

/// The two distributed primitives a decomposition step needs.
pub trait StepRunner {
    /// Multi-source BFS inside `mask` up to `depth` hops. A node at distance
    /// `p` takes the smallest `(label, sender)` over its distance-`p-1` neighbours.
    fn labeled_bfs(&mut self, g: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Result<Vec<Option<Reach>>>;

    /// Per tree, the sum over its nodes of `contrib(v, tree)`.
    fn tally(
        &mut self,
        g: &NetworkGraph,
        trees: &[ClusterTree],
        contrib: &dyn Fn(NodeId, ClusterId) -> (u64, u64),
    ) -> Result<BTreeMap<ClusterId, (u64, u64)>>;
}

/// Centralised lockstep execution; counts synchronous rounds.
#[derive(Clone, Debug, Default)]
pub struct SyncRunner {
    pub rounds: u64,
}

/// Reference labelled BFS shared by the lockstep runner and tests.
pub(crate) fn labeled_bfs_central(g: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Vec<Option<Reach>> {
    let mut reach = vec![None; g.n()];
    let mut layer = Vec::new();
    for &(s, label) in sources {
        reach[s as usize] = Some(Reach { label, parent: None, dist: 0 });
        layer.push(s);
    }
    for dist in 1..=depth {
        let mut next: BTreeMap<NodeId, (u32, NodeId)> = BTreeMap::new();
        for &u in &layer {
            let lu = reach[u as usize].unwrap().label;
            for &v in g.neighbors(u) {
                if mask[v as usize] && reach[v as usize].is_none() {
                    let e = next.entry(v).or_insert((lu, u));
                    *e = (*e).min((lu, u));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer.clear();
        for (v, (label, p)) in next {
            reach[v as usize] = Some(Reach { label, parent: Some(p), dist });
            layer.push(v);
        }
    }
    reach
}

impl StepRunner for SyncRunner {
    fn labeled_bfs(&mut self, g: &NetworkGraph, mask: &[bool], sources: &[(NodeId, u32)], depth: u32) -> Result<Vec<Option<Reach>>> {
        self.rounds += depth as u64 + 1;
        Ok(labeled_bfs_central(g, mask, sources, depth))
    }

    fn tally(
        &mut self,
        _: &NetworkGraph,
        trees: &[ClusterTree],
        contrib: &dyn Fn(NodeId, ClusterId) -> (u64, u64),
    ) -> Result<BTreeMap<ClusterId, (u64, u64)>> {
        self.rounds += 2 * trees.iter().map(|t| t.depth() as u64).max().unwrap_or(0);
        Ok(trees
            .iter()
            .map(|t| {
                let s = t.nodes().map(|v| contrib(v, t.id)).fold((0, 0), |a, x| (a.0 + x.0, a.1 + x.1));
                (t.id, s)
            })
            .collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DecomposeStats {
    /// `(living at start, clustered)` per colour.
    pub colors: Vec<(usize, usize)>,
    pub phases: u64,
    pub steps: u64,
    pub killed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorClass {
    pub clusters: Vec<ClusterTree>,
    pub clustered: Vec<bool>,
}

/// Bit length of the largest id, at least 1.
fn id_bits(n: usize) -> u32 {
    (u32::BITS - (n.saturating_sub(1) as u32).leading_zeros()).max(1)
}

/// Attaches `v` to `tree` along BFS parents until the walk meets the tree.
fn graft(tree: &mut ClusterTree, reach: &[Option<Reach>], v: NodeId) {
    let mut u = v;
    while !tree.contains(u) {
        let p = reach[u as usize].and_then(|r| r.parent).expect("BFS parents lead back to the sources");
        tree.parent.insert(u, p);
        u = p;
    }
}

/// Drops nonterminal leaves repeatedly.
fn prune(tree: &mut ClusterTree) {
    loop {
        let ch = tree.children();
        let dead: Vec<NodeId> =
            tree.parent.keys().copied().filter(|v| !tree.members.contains(v) && !ch.contains_key(v)).collect();
        if dead.is_empty() {
            return;
        }
        for v in dead {
            tree.parent.remove(&v);
        }
    }
}

/// Clusters at least half of `living` into clusters more than `k` apart.
pub fn decompose_one_color(
    g: &NetworkGraph,
    mask: &[bool],
    living: &[bool],
    k: u32,
    runner: &mut dyn StepRunner,
    stats: &mut DecomposeStats,
) -> Result<ColorClass> {
    if k == 0 {
        return Err(Error::Usage("separation must be at least 1".into()));
    }
    let n = g.n();
    let b = id_bits(n);
    let steps = 10 * b * log_n(n);
    let mut label: Vec<Option<u32>> = (0..n).map(|v| living[v].then_some(v as u32)).collect();
    let mut trees: BTreeMap<u32, ClusterTree> =
        (0..n).filter(|&v| living[v]).map(|v| (v as u32, ClusterTree::singleton(v as u32, v as NodeId))).collect();

    for i in 0..b {
        let bit = 1u32 << i;
        let suffix = bit - 1;
        let mut active: BTreeSet<u32> = trees.keys().copied().filter(|l| l & bit == 0).collect();
        // A phase with no red node in any class that has a blue node changes nothing.
        let blue_classes: BTreeSet<u32> = active.iter().map(|l| l & suffix).collect();
        if !label.iter().flatten().any(|l| l & bit != 0 && blue_classes.contains(&(l & suffix))) {
            continue;
        }
        stats.phases += 1;
        for _ in 0..steps {
            if active.is_empty() {
                break;
            }
            stats.steps += 1;
            let sources: Vec<(NodeId, u32)> = (0..n)
                .filter_map(|v| label[v].filter(|l| active.contains(l)).map(|l| (v as NodeId, l)))
                .collect();
            let reach = runner.labeled_bfs(g, mask, &sources, k)?;
            let mut requester: Vec<Option<u32>> = vec![None; n];
            let mut ext: BTreeMap<u32, ClusterTree> = active.iter().map(|l| (*l, trees[l].clone())).collect();
            for v in 0..n {
                let (Some(own), Some(r)) = (label[v], reach[v]) else { continue };
                if own & bit != 0 && r.label & suffix == own & suffix && active.contains(&r.label) {
                    requester[v] = Some(r.label);
                    graft(ext.get_mut(&r.label).unwrap(), &reach, v as NodeId);
                }
            }
            let ext: Vec<ClusterTree> = ext.into_values().collect();
            let totals = runner.tally(g, &ext, &|v, c| {
                let v = v as usize;
                ((label[v] == Some(c)) as u64, (requester[v] == Some(c)) as u64)
            })?;
            for t in ext {
                let (members, requests) = totals[&t.id];
                let accept = 2 * b as u64 * requests > members;
                for v in 0..n {
                    if requester[v] == Some(t.id) {
                        if accept {
                            label[v] = Some(t.id);
                        } else {
                            label[v] = None;
                            stats.killed += 1;
                        }
                    }
                }
                if accept {
                    trees.insert(t.id, t);
                } else {
                    active.remove(&t.id);
                }
            }
            let present: BTreeSet<u32> = label.iter().flatten().copied().collect();
            trees.retain(|l, _| present.contains(l));
        }
    }

    let mut clusters: Vec<ClusterTree> = trees
        .into_iter()
        .map(|(l, mut t)| {
            t.members = (0..n as NodeId).filter(|&v| label[v as usize] == Some(l)).collect();
            prune(&mut t);
            t
        })
        .collect();
    clusters.sort_by_key(|t| t.id);
    Ok(ColorClass { clusters, clustered: label.iter().map(Option::is_some).collect() })
}

/// Decomposes the subgraph induced by `mask` into colour classes of `k`-separated clusters.
pub fn decompose(g: &NetworkGraph, mask: &[bool], k: u32, runner: &mut dyn StepRunner) -> Result<(NetworkDecomposition, DecomposeStats)> {
    let n = g.n();
    let cap = 4 * log_n(n) as usize + 4;
    let mut living = mask.to_vec();
    let mut colors = Vec::new();
    let mut stats = DecomposeStats::default();
    while living.iter().any(|&b| b) {
        if colors.len() == cap {
            return Err(Error::Protocol { node: 0, what: format!("decomposition needs more than {cap} colours") });
        }
        let before = living.iter().filter(|&&b| b).count();
        let cc = decompose_one_color(g, mask, &living, k, runner, &mut stats)?;
        let got = cc.clustered.iter().filter(|&&b| b).count();
        if got == 0 {
            return Err(Error::Protocol { node: 0, what: "a colour clustered no node".into() });
        }
        stats.colors.push((before, got));
        for (l, c) in living.iter_mut().zip(&cc.clustered) {
            *l &= !c;
        }
        colors.push(cc.clusters);
    }
    Ok((NetworkDecomposition { separation: k, colors }, stats))
}

/// Sparse `d`-cover of the subgraph induced by `mask`: a `(2d+1)`-separated
/// decomposition whose clusters each grow by their `d`-ball.
pub fn build_cover(
    g: &NetworkGraph,
    mask: &[bool],
    d: u32,
    runner: &mut dyn StepRunner,
) -> Result<(SparseCover, NetworkDecomposition, DecomposeStats)> {
    if d == 0 {
        return Err(Error::Usage("cover radius must be at least 1".into()));
    }
    let (dec, stats) = decompose(g, mask, 2 * d + 1, runner)?;
    let mut clusters = Vec::new();
    for color in &dec.colors {
        let sources: Vec<(NodeId, u32)> = color.iter().flat_map(|t| t.members.iter().map(|&v| (v, t.id))).collect();
        let reach = runner.labeled_bfs(g, mask, &sources, d)?;
        for t in color {
            let mut grown = t.clone();
            for (v, r) in reach.iter().enumerate() {
                if r.is_some_and(|r| r.label == t.id) {
                    graft(&mut grown, &reach, v as NodeId);
                    grown.members.insert(v as NodeId);
                }
            }
            grown.id = clusters.len() as ClusterId;
            clusters.push(grown);
        }
    }
    Ok((SparseCover { radius: d as u64, clusters }, dec, stats))
}

pub fn build_cover_sync(g: &NetworkGraph, d: u32) -> Result<SparseCover> {
    Ok(build_cover(g, &vec![true; g.n()], d, &mut SyncRunner::default())?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{verify_cover, verify_decomposition};
    use crate::graph::{diameter, generate, Family, GraphSpec};
    use proptest::prelude::*;

    fn all(g: &NetworkGraph) -> Vec<bool> {
        vec![true; g.n()]
    }

    #[test]
    fn single_node() {
        let g = NetworkGraph::from_edges(1, &[]).unwrap();
        let (dec, _) = decompose(&g, &all(&g), 3, &mut SyncRunner::default()).unwrap();
        assert_eq!(dec.colors.len(), 1);
        assert_eq!(dec.colors[0].len(), 1);
        assert!(verify_decomposition(&g, &dec, None).pass());
    }

    #[test]
    fn far_apart_nodes_cluster_separately() {
        // 0 and 4 at distance 4 > k = 2; the middle is outside the living set.
        let g = generate(&GraphSpec::new(Family::Path, 5, 0)).unwrap();
        let living = [true, false, false, false, true];
        let cc = decompose_one_color(&g, &all(&g), &living, 2, &mut SyncRunner::default(), &mut Default::default()).unwrap();
        assert_eq!(cc.clustered, living.to_vec());
        assert_eq!(cc.clusters.len(), 2);
    }

    #[test]
    fn complete_graph_one_cluster_per_colour() {
        let g = generate(&GraphSpec::new(Family::Complete, 12, 0)).unwrap();
        let (dec, st) = decompose(&g, &all(&g), 1, &mut SyncRunner::default()).unwrap();
        assert!(dec.colors.iter().all(|c| c.len() == 1));
        // Phase 2 denies node 4's lone request (2b = 8 <= 10 members); 8 follows in phase 3.
        assert_eq!(st.colors, vec![(12, 10), (2, 2)]);
        assert!(verify_decomposition(&g, &dec, None).pass());
    }

    #[test]
    fn path_and_random_graph_decompositions() {
        for (spec, k) in [(GraphSpec::new(Family::Path, 64, 0), 2), (GraphSpec::new(Family::RandomConnected, 128, 3), 3)] {
            let g = generate(&spec).unwrap();
            let mut st = DecomposeStats::default();
            let cc = decompose_one_color(&g, &all(&g), &all(&g), k, &mut SyncRunner::default(), &mut st).unwrap();
            assert!(2 * cc.clustered.iter().filter(|&&b| b).count() >= g.n());
            let (dec, stats) = decompose(&g, &all(&g), k, &mut SyncRunner::default()).unwrap();
            let r = verify_decomposition(&g, &dec, None);
            assert!(r.pass(), "{:?}", r.failures());
            assert!(dec.colors.len() <= log_n(g.n()) as usize + 2, "{} colours", dec.colors.len());
            assert!(stats.colors.iter().all(|&(a, c)| 2 * c >= a));
        }
    }

    #[test]
    fn star_cover_contains_star() {
        let g = generate(&GraphSpec::new(Family::Star, 9, 0)).unwrap();
        let c = build_cover_sync(&g, 1).unwrap();
        assert!(c.spanning_cluster(&all(&g)).is_some());
        assert!(verify_cover(&g, &c, None).pass());
    }

    #[test]
    fn path_cover_radius_four() {
        let g = generate(&GraphSpec::new(Family::Path, 32, 0)).unwrap();
        let c = build_cover_sync(&g, 4).unwrap();
        let r = verify_cover(&g, &c, None);
        assert!(r.pass(), "{:?}", r.failures());
        assert!(r.max_membership <= 2 * log_n(32) as usize);
    }

    #[test]
    fn full_radius_spans() {
        let g = generate(&GraphSpec::new(Family::Grid, 16, 0)).unwrap();
        let c = build_cover_sync(&g, diameter(&g)).unwrap();
        assert!(c.spanning_cluster(&all(&g)).is_some());
    }

    #[test]
    fn masked_cover_stays_inside() {
        let g = generate(&GraphSpec::new(Family::Grid, 36, 1)).unwrap();
        let mask: Vec<bool> = (0..36).map(|v| v % 6 < 4).collect();
        let (c, dec, _) = build_cover(&g, &mask, 2, &mut SyncRunner::default()).unwrap();
        assert!(verify_decomposition(&g, &dec, Some(&mask)).pass());
        let r = verify_cover(&g, &c, Some(&mask));
        assert!(r.pass(), "{:?}", r.failures());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn covers_always_verify(fam in 0usize..4, n in 2usize..48, seed in 0u64..1000, d in 1u32..4) {
            let family = [Family::Path, Family::Cycle, Family::Grid, Family::RandomConnected][fam];
            let g = generate(&GraphSpec::new(family, n, seed)).unwrap();
            let (c, dec, stats) = build_cover(&g, &all(&g), d, &mut SyncRunner::default()).unwrap();
            let rd = verify_decomposition(&g, &dec, None);
            prop_assert!(rd.pass(), "{:?}", rd.failures());
            let rc = verify_cover(&g, &c, None);
            prop_assert!(rc.pass(), "{:?}", rc.failures());
            prop_assert!(stats.colors.iter().all(|&(a, c)| 2 * c >= a));
        }
    }
}
