//! Sparse covers, weak-diameter network decompositions and their verifiers.

mod decompose;
mod verify;

pub use decompose::{
    build_cover, build_cover_sync, decompose, decompose_one_color, ColorClass, DecomposeStats, Reach, StepRunner,
    SyncRunner,
};
pub use verify::{verify_cover, verify_decomposition, Check, CoverReport};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterId, ClusterTree};
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// `⌈log2 n⌉`, at least 1.
pub fn log_n(n: usize) -> u32 {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1)
}

/// Clusters whose trees reach every node's `radius`-ball in some cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseCover {
    pub radius: u64,
    pub clusters: Vec<ClusterTree>,
}

impl SparseCover {
    pub fn memberships(&self, n: usize) -> Vec<Vec<ClusterId>> {
        let mut out = vec![Vec::new(); n];
        for c in &self.clusters {
            for &v in &c.members {
                out[v as usize].push(c.id);
            }
        }
        out
    }

    /// A cluster containing every node selected by `mask`, if any.
    pub fn spanning_cluster(&self, mask: &[bool]) -> Option<ClusterId> {
        let want = mask.iter().filter(|&&b| b).count();
        self.clusters
            .iter()
            .find(|c| c.members.len() >= want && mask.iter().enumerate().all(|(v, &b)| !b || c.members.contains(&(v as NodeId))))
            .map(|c| c.id)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("cover {} {}\n", self.radius, self.clusters.len());
        for c in &self.clusters {
            writeln!(s, "{} {} {}", c.id, c.root, c.depth()).unwrap();
            for v in c.nodes() {
                let p = c.parent_of(v).map_or("-".to_string(), |p| p.to_string());
                let t = if c.members.contains(&v) { 'T' } else { 'N' };
                writeln!(s, "  {v} {p} {t}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidCover(format!("parse: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if head.len() != 3 || head[0] != "cover" {
            return Err(bad("expected `cover <radius> <clusters>`"));
        }
        let radius = head[1].parse().map_err(|_| bad("radius"))?;
        let count: usize = head[2].parse().map_err(|_| bad("cluster count"))?;
        let mut clusters = Vec::with_capacity(count);
        while let Some(line) = lines.next() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [id, root, _radius] = f[..] else { return Err(bad(line)) };
            let mut c = ClusterTree {
                id: id.parse().map_err(|_| bad(line))?,
                root: root.parse().map_err(|_| bad(line))?,
                parent: BTreeMap::new(),
                members: Default::default(),
            };
            while lines.peek().is_some_and(|l| l.starts_with(' ')) {
                let l = lines.next().unwrap();
                let f: Vec<&str> = l.split_whitespace().collect();
                let [v, p, t] = f[..] else { return Err(bad(l)) };
                let v: NodeId = v.parse().map_err(|_| bad(l))?;
                if p != "-" {
                    c.parent.insert(v, p.parse().map_err(|_| bad(l))?);
                }
                match t {
                    "T" => {
                        c.members.insert(v);
                    }
                    "N" => {}
                    _ => return Err(bad(l)),
                }
            }
            clusters.push(c);
        }
        if clusters.len() != count {
            return Err(bad("cluster count mismatch"));
        }
        Ok(Self { radius, clusters })
    }
}

/// Sparse `2^j`-covers indexed by `j`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredCover {
    pub layers: BTreeMap<u32, SparseCover>,
    /// Layer found (by a spanning check) to contain a cluster with every node.
    pub spanning: Option<u32>,
}

impl LayeredCover {
    pub fn insert(&mut self, j: u32, cover: SparseCover) {
        self.layers.insert(j, cover);
    }

    /// Smallest layer of radius at least `radius`, else the spanning layer.
    pub fn layer_for(&self, radius: u64) -> Result<&SparseCover> {
        self.layers
            .values()
            .find(|c| c.radius >= radius)
            .or_else(|| self.spanning.and_then(|j| self.layers.get(&j)))
            .ok_or(Error::MissingCoverLayer(radius))
    }

    pub fn max_radius(&self) -> u64 {
        self.layers.values().map(|c| c.radius).max().unwrap_or(0)
    }
}

/// Colour classes of vertex-disjoint clusters; `clusters[c]` holds colour `c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDecomposition {
    pub separation: u32,
    pub colors: Vec<Vec<ClusterTree>>,
}

impl NetworkDecomposition {
    /// `(color, cluster)` per node; `None` for nodes outside the decomposed set.
    pub fn assignment(&self, n: usize) -> Vec<Option<(usize, ClusterId)>> {
        let mut out = vec![None; n];
        for (c, cl) in self.colors.iter().enumerate() {
            for t in cl {
                for &v in &t.members {
                    out[v as usize] = Some((c, t.id));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_n_rounds_up() {
        assert_eq!(log_n(1), 1);
        assert_eq!(log_n(2), 1);
        assert_eq!(log_n(3), 2);
        assert_eq!(log_n(64), 6);
        assert_eq!(log_n(65), 7);
    }

    #[test]
    fn text_round_trip() {
        let c = SparseCover {
            radius: 2,
            clusters: vec![
                ClusterTree { id: 0, root: 1, parent: [(0, 1), (2, 1)].into_iter().collect(), members: [0, 1].into_iter().collect() },
                ClusterTree::singleton(1, 3),
            ],
        };
        assert_eq!(SparseCover::from_text(&c.to_text()).unwrap(), c);
        assert!(SparseCover::from_text("cover 2 3\n0 0 0\n  0 - T\n").is_err());
    }

    #[test]
    fn layer_lookup() {
        let mut l = LayeredCover::default();
        l.insert(5, SparseCover { radius: 32, clusters: vec![] });
        l.insert(6, SparseCover { radius: 64, clusters: vec![] });
        assert_eq!(l.layer_for(40).unwrap().radius, 64);
        assert!(matches!(l.layer_for(100), Err(Error::MissingCoverLayer(100))));
        l.spanning = Some(5);
        assert_eq!(l.layer_for(100).unwrap().radius, 32);
    }
}
