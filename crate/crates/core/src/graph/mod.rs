//! The gateway mesh as an undirected graph, plus hop-distance and
//! bounded-length path algorithms over it.
//!
//! Nodes are addressed by their gateway id ([`NodeId`]). Ids need not be
//! contiguous (the largest-component step keeps the original ids), so each
//! graph also has a dense internal index in ascending id order. Adjacency
//! lists are sorted ascending, which makes every traversal deterministic.

mod paths;
mod search;

pub use paths::{count_simple_paths, disjoint_paths, enumerate_simple_paths, PathSearch, DEFAULT_PATH_CAP};
pub use search::{hop_distances, reachable_within, HopMap};

pub(crate) use search::{bfs_levels, UNREACHED};

use serde::Serialize;
use thiserror::Error;

use crate::geodata::GeoPoint;

/// Stable gateway identifier assigned at ingestion.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown gateway {0}")]
    UnknownNode(NodeId),
    #[error("duplicate gateway id {0}")]
    DuplicateNode(NodeId),
    #[error("self-loop on gateway {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("source and destination are both gateway {0}")]
    SameEndpoints(NodeId),
    #[error("maximum path length must be at least 1")]
    ZeroLength,
    #[error("more than {cap} paths enumerated; lower max_hops or raise the cap")]
    TooManyPaths { cap: u64 },
}

/// An undirected link between two gateways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub distance_m: f64,
    pub rate_bps: f64,
}

/// One adjacency entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Dense index of the neighbor.
    pub index: usize,
    pub id: NodeId,
    pub distance_m: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayGraph {
    points: Vec<GeoPoint>,
    adjacency: Vec<Vec<Neighbor>>,
    edge_count: usize,
}

impl GatewayGraph {
    /// Builds a graph from positioned nodes and undirected edges. Rejects
    /// duplicate ids, unknown endpoints, self-loops and repeated edges.
    pub fn from_edges(mut points: Vec<GeoPoint>, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        points.sort_by_key(|p| p.id);
        if let Some(w) = points.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateNode(w[0].id));
        }
        let index_of = |id: NodeId| points.binary_search_by_key(&id, |p| p.id).map_err(|_| GraphError::UnknownNode(id));
        let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); points.len()];
        let mut edge_count = 0;
        for e in edges {
            let (ia, ib) = (index_of(e.a)?, index_of(e.b)?);
            if ia == ib {
                return Err(GraphError::SelfLoop(e.a));
            }
            let entry = |index, id| Neighbor { index, id, distance_m: e.distance_m, rate_bps: e.rate_bps };
            adjacency[ia].push(entry(ib, e.b));
            adjacency[ib].push(entry(ia, e.a));
            edge_count += 1;
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_by_key(|n| n.index);
            if let Some(w) = list.windows(2).find(|w| w[0].index == w[1].index) {
                return Err(GraphError::DuplicateEdge(points[i].id, w[0].id));
            }
        }
        Ok(Self { points, adjacency, edge_count })
    }

    /// Abstract topology on ids `0..n` with all nodes at (0°, 0°), zero
    /// edge length and unit rate. Handy for purely combinatorial work.
    pub fn topology(n: usize, pairs: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let points = (0..n).map(|id| GeoPoint { id, lat: 0.0, lon: 0.0 }).collect();
        let edges = pairs.iter().map(|&(a, b)| Edge { a, b, distance_m: 0.0, rate_bps: 1.0 });
        Self::from_edges(points, edges)
    }

    /// Complete graph K_n over ids `0..n`.
    pub fn complete(n: usize) -> Self {
        let pairs: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::topology(n, &pairs).expect("complete graph is simple")
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Gateway ids in ascending order.
    pub fn node_ids(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.points.iter().map(|p| p.id)
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.points.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub(crate) fn require(&self, id: NodeId) -> Result<usize, GraphError> {
        self.index_of(id).ok_or(GraphError::UnknownNode(id))
    }

    /// Id at a dense index. Panics if out of bounds.
    pub fn id_at(&self, index: usize) -> NodeId {
        self.points[index].id
    }

    pub fn point(&self, id: NodeId) -> Option<&GeoPoint> {
        self.index_of(id).map(|i| &self.points[i])
    }

    pub fn point_at(&self, index: usize) -> &GeoPoint {
        &self.points[index]
    }

    pub fn neighbors(&self, id: NodeId) -> Result<&[Neighbor], GraphError> {
        Ok(&self.adjacency[self.require(id)?])
    }

    pub fn neighbors_by_index(&self, index: usize) -> &[Neighbor] {
        &self.adjacency[index]
    }

    pub fn degree(&self, id: NodeId) -> Result<usize, GraphError> {
        Ok(self.neighbors(id)?.len())
    }

    /// The link between two dense indices, if any.
    pub fn link(&self, from: usize, to: usize) -> Option<&Neighbor> {
        let list = &self.adjacency[from];
        list.binary_search_by_key(&to, |n| n.index).ok().map(|k| &list[k])
    }

    /// Each undirected edge once, with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency.iter().enumerate().flat_map(move |(i, list)| {
            let a = self.points[i].id;
            list.iter().filter(move |n| n.index > i).map(move |n| Edge {
                a,
                b: n.id,
                distance_m: n.distance_m,
                rate_bps: n.rate_bps,
            })
        })
    }

    /// Induced subgraph on the dense indices selected by `keep`.
    pub(crate) fn induced_by_index(&self, keep: impl Fn(usize) -> bool) -> Self {
        let kept: Vec<bool> = (0..self.node_count()).map(&keep).collect();
        let points = self.points.iter().enumerate().filter(|(i, _)| kept[*i]).map(|(_, p)| *p).collect();
        let edges: Vec<Edge> = self
            .edges()
            .filter(|e| {
                kept[self.index_of(e.a).expect("edge endpoint")] && kept[self.index_of(e.b).expect("edge endpoint")]
            })
            .collect();
        Self::from_edges(points, edges).expect("subgraph of a valid graph is valid")
    }

    /// True iff every node reaches every other node. The empty graph counts
    /// as connected.
    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        bfs_levels(self, 0, None).iter().all(|&d| d != UNREACHED)
    }
}
