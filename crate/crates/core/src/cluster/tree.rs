use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, NodeId};

pub type ClusterId = u32;

/// A rooted Steiner tree spanning a cluster's members, possibly through relays.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub id: ClusterId,
    pub root: NodeId,
    /// Parent of every non-root tree node.
    pub parent: BTreeMap<NodeId, NodeId>,
    pub members: BTreeSet<NodeId>,
}

impl ClusterTree {
    pub fn singleton(id: ClusterId, v: NodeId) -> Self {
        Self { id, root: v, parent: BTreeMap::new(), members: [v].into_iter().collect() }
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v == self.root || self.parent.contains_key(&v)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::once(self.root).chain(self.parent.keys().copied())
    }

    pub fn len(&self) -> usize {
        self.parent.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent_of(&self, v: NodeId) -> Option<NodeId> {
        self.parent.get(&v).copied()
    }

    pub fn children(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut ch: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&c, &p) in &self.parent {
            ch.entry(p).or_default().push(c);
        }
        ch
    }

    /// Per-node depth below the root.
    pub fn depths(&self) -> BTreeMap<NodeId, u32> {
        let ch = self.children();
        let mut d = BTreeMap::from([(self.root, 0)]);
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            for &c in ch.get(&u).into_iter().flatten() {
                d.insert(c, d[&u] + 1);
                stack.push(c);
            }
        }
        d
    }

    pub fn depth(&self) -> u32 {
        self.depths().values().copied().max().unwrap_or(0)
    }

    /// Tree edges follow graph edges, every node reaches the root, members are tree nodes.
    pub fn validate(&self, g: &NetworkGraph) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCover(format!("cluster {}: {m}", self.id)));
        if self.parent.contains_key(&self.root) {
            return bad("root has a parent".into());
        }
        for (&c, &p) in &self.parent {
            if !g.has_edge(c, p) {
                return bad(format!("tree edge ({c},{p}) is not a graph edge"));
            }
        }
        if self.depths().len() != self.len() {
            return bad("tree is not connected to its root".into());
        }
        if let Some(m) = self.members.iter().find(|&&m| !self.contains(m)) {
            return bad(format!("member {m} is not in the tree"));
        }
        Ok(())
    }
}

/// One node's local view of one cluster tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeView {
    pub cluster: ClusterId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub member: bool,
}

/// For each node, its views of all trees it belongs to, ordered by cluster id.
pub fn local_views<'a>(n: usize, trees: impl IntoIterator<Item = &'a ClusterTree>) -> Vec<Vec<TreeView>> {
    let mut out = vec![Vec::new(); n];
    for t in trees {
        let ch = t.children();
        for v in t.nodes() {
            out[v as usize].push(TreeView {
                cluster: t.id,
                parent: t.parent_of(v),
                children: ch.get(&v).cloned().unwrap_or_default(),
                member: t.members.contains(&v),
            });
        }
    }
    for views in &mut out {
        views.sort_by_key(|v| v.cluster);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family, GraphSpec};

    #[test]
    fn path_tree_shape() {
        let g = generate(&GraphSpec::new(Family::Path, 4, 0)).unwrap();
        let t = ClusterTree {
            id: 3,
            root: 0,
            parent: [(1, 0), (2, 1), (3, 2)].into_iter().collect(),
            members: [0, 3].into_iter().collect(),
        };
        t.validate(&g).unwrap();
        assert_eq!(t.depth(), 3);
        let views = local_views(4, [&t]);
        assert_eq!(views[1][0].parent, Some(0));
        assert_eq!(views[1][0].children, vec![2]);
        assert!(!views[1][0].member);
        assert!(views[3][0].member);
    }

    #[test]
    fn rejects_non_edges_and_detached_nodes() {
        let g = generate(&GraphSpec::new(Family::Path, 4, 0)).unwrap();
        let t = ClusterTree { id: 0, root: 0, parent: [(2, 0)].into_iter().collect(), members: [0].into_iter().collect() };
        assert!(t.validate(&g).is_err());
        let cyc = ClusterTree { id: 0, root: 0, parent: [(1, 2), (2, 1)].into_iter().collect(), members: [0].into_iter().collect() };
        assert!(cyc.validate(&g).is_err());
    }
}
