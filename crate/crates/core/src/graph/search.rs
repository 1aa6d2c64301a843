use std::collections::{BTreeSet, VecDeque};

use super::{GatewayGraph, GraphError, NodeId};

pub(crate) const UNREACHED: u32 = u32::MAX;

/// Breadth-first hop levels from a dense index. With a `limit`, nodes
/// beyond it stay [`UNREACHED`].
pub(crate) fn bfs_levels(graph: &GatewayGraph, src: usize, limit: Option<usize>) -> Vec<u32> {
    let mut level = vec![UNREACHED; graph.node_count()];
    let limit = limit.map_or(u32::MAX - 1, |l| l.min(u32::MAX as usize - 1) as u32);
    level[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let next = level[u] + 1;
        if next > limit {
            continue;
        }
        for nb in graph.neighbors_by_index(u) {
            if level[nb.index] == UNREACHED {
                level[nb.index] = next;
                queue.push_back(nb.index);
            }
        }
    }
    level
}

/// Minimum hop counts from one gateway to every other.
#[derive(Debug, Clone, PartialEq)]
pub struct HopMap {
    source: NodeId,
    ids: Vec<NodeId>,
    hops: Vec<Option<usize>>,
}

impl HopMap {
    pub fn source(&self) -> NodeId {
        self.source
    }

    /// Hop count to `id`; `None` when unreachable or not in the graph.
    pub fn get(&self, id: NodeId) -> Option<usize> {
        let k = self.ids.binary_search(&id).ok()?;
        self.hops[k]
    }

    /// `(id, hops)` pairs in ascending id order; unreachable nodes carry `None`.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, Option<usize>)> + '_ {
        self.ids.iter().copied().zip(self.hops.iter().copied())
    }

    pub fn reachable_count(&self) -> usize {
        self.hops.iter().filter(|h| h.is_some()).count()
    }
}

/// Unweighted shortest hop counts from `src`.
pub fn hop_distances(graph: &GatewayGraph, src: NodeId) -> Result<HopMap, GraphError> {
    let s = graph.require(src)?;
    let levels = bfs_levels(graph, s, None);
    Ok(HopMap {
        source: src,
        ids: graph.node_ids().collect(),
        hops: levels.into_iter().map(|l| (l != UNREACHED).then_some(l as usize)).collect(),
    })
}

/// Gateways at hop distance `1..=max_hops` from `node`; `node` itself is
/// never included.
pub fn reachable_within(graph: &GatewayGraph, node: NodeId, max_hops: usize) -> Result<BTreeSet<NodeId>, GraphError> {
    let s = graph.require(node)?;
    let levels = bfs_levels(graph, s, Some(max_hops));
    Ok(levels.iter().enumerate().filter(|&(i, &l)| i != s && l != UNREACHED).map(|(i, _)| graph.id_at(i)).collect())
}
