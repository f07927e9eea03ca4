use super::*;
use crate::graph::{generate, mst_oracle, multi_source_distances, Family, GraphSpec};

#[test]
fn election_agrees_on_min_id() {
    for (fam, n, seed) in [(Family::Cycle, 16, 0), (Family::Grid, 25, 1), (Family::RandomConnected, 30, 2)] {
        let g = generate(&GraphSpec::new(fam, n, seed)).unwrap();
        let out = leader_election(&g, &AdversarySpec::edge_biased(seed)).unwrap();
        assert!(out.sync_equivalence, "{fam:?}");
        assert!(out.outputs.iter().all(|&o| o == Some(0)), "{fam:?}");
    }
}

#[test]
fn election_on_complete_graph_is_short() {
    let g = generate(&GraphSpec::new(Family::Complete, 32, 0)).unwrap();
    let out = leader_election(&g, &AdversarySpec::UniformRandom { seed: 3 }).unwrap();
    assert!(out.outputs.iter().all(|&o| o == Some(0)));
    assert!(election_epochs(&out) <= 2);
}

#[test]
fn mst_matches_kruskal() {
    let g = generate(&GraphSpec::new(Family::RandomConnected, 64, 11).weighted()).unwrap();
    let out = mst(&g, &AdversarySpec::UniformRandom { seed: 11 }).unwrap();
    assert!(out.sync_equivalence);
    let oracle: BTreeSet<(NodeId, NodeId)> = mst_oracle(&g).unwrap().edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    assert_eq!(mst_edges(&out), oracle);
}

#[test]
fn mst_of_a_tree_is_the_tree() {
    let g = NetworkGraph::from_weighted_edges(4, &[(0, 1, 5), (1, 2, 3), (1, 3, 9)]).unwrap();
    let out = mst(&g, &AdversarySpec::MaxDelay).unwrap();
    assert_eq!(mst_edges(&out), [(0, 1), (1, 2), (1, 3)].into_iter().collect());
}

#[test]
fn mst_needs_weights() {
    let g = generate(&GraphSpec::new(Family::Path, 4, 0)).unwrap();
    assert!(matches!(mst(&g, &AdversarySpec::MaxDelay), Err(Error::Unweighted)));
}

#[test]
fn bfs_parents_step_toward_sources() {
    let g = generate(&GraphSpec::new(Family::Grid, 36, 0)).unwrap();
    let sources = [0, 35];
    let out = bfs_app(&g, &sources, &AdversarySpec::edge_biased(5)).unwrap();
    assert_eq!(out.dist, multi_source_distances(&g, &sources, None));
    for v in 0..36 {
        match out.parent[v] {
            Some(p) => {
                assert!(g.neighbors(v as NodeId).contains(&p));
                assert_eq!(out.dist[p as usize].unwrap() + 1, out.dist[v].unwrap());
            }
            None => assert!(sources.contains(&(v as NodeId))),
        }
    }
}

#[test]
fn bfs_path_parents_form_the_path() {
    let g = generate(&GraphSpec::new(Family::Path, 20, 0)).unwrap();
    let out = bfs_app(&g, &[0], &AdversarySpec::MaxDelay).unwrap();
    let want: Vec<Option<NodeId>> = (0..20u32).map(|v| v.checked_sub(1)).collect();
    assert_eq!(out.parent, want);
}

#[test]
fn bfs_all_sources() {
    let g = generate(&GraphSpec::new(Family::Cycle, 10, 0)).unwrap();
    let all: Vec<NodeId> = (0..10).collect();
    let out = bfs_app(&g, &all, &AdversarySpec::MaxDelay).unwrap();
    assert!(out.dist.iter().all(|&d| d == Some(0)));
    assert!(out.parent.iter().all(Option::is_none));
}
