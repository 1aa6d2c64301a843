use super::search::{bfs_levels, UNREACHED};
use super::{GatewayGraph, GraphError, NodeId};

/// Default bound on the number of paths a single search may produce.
pub const DEFAULT_PATH_CAP: u64 = 10_000_000;

/// Bounded-length simple-path queries (no repeated gateways, 1 to
/// `max_len` edges).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSearch {
    max_len: usize,
    cap: u64,
}

impl PathSearch {
    pub fn new(max_len: usize) -> Self {
        Self { max_len, cap: DEFAULT_PATH_CAP }
    }

    pub fn with_cap(self, cap: u64) -> Self {
        Self { cap, ..self }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn endpoints(&self, g: &GatewayGraph, src: NodeId, dst: NodeId) -> Result<(usize, usize), GraphError> {
        if self.max_len == 0 {
            return Err(GraphError::ZeroLength);
        }
        let (s, d) = (g.require(src)?, g.require(dst)?);
        if s == d {
            return Err(GraphError::SameEndpoints(src));
        }
        Ok((s, d))
    }

    /// Number of simple `src`-`dst` paths. Branches that cannot reach `dst`
    /// within the remaining budget are pruned using hop levels from `dst`.
    pub fn count(&self, g: &GatewayGraph, src: NodeId, dst: NodeId) -> Result<u64, GraphError> {
        let (s, d) = self.endpoints(g, src, dst)?;
        let to_dst = bfs_levels(g, d, Some(self.max_len));
        if to_dst[s] == UNREACHED {
            return Ok(0);
        }
        let mut walk = Walk::new(g, d, &to_dst, self.max_len);
        let mut count = 0u64;
        walk.visited[s] = true;
        walk.run(s, 0, &mut |_| {
            count += 1;
            if count > self.cap {
                Err(GraphError::TooManyPaths { cap: self.cap })
            } else {
                Ok(())
            }
        })?;
        Ok(count)
    }

    /// Path counts from `src` to every node at once, indexed by dense
    /// index (`counts[src]` is 0). The cap applies to the total number of
    /// paths explored.
    pub fn counts_from(&self, g: &GatewayGraph, src: NodeId) -> Result<Vec<u64>, GraphError> {
        if self.max_len == 0 {
            return Err(GraphError::ZeroLength);
        }
        let s = g.require(src)?;
        let mut counts = vec![0u64; g.node_count()];
        let mut visited = vec![false; g.node_count()];
        let mut total = 0u64;
        visited[s] = true;
        fan_out(g, s, 1, self.max_len, &mut visited, &mut counts, &mut total, self.cap)?;
        Ok(counts)
    }

    /// All simple `src`-`dst` paths as id sequences, ordered by length and
    /// then lexicographically.
    pub fn enumerate(&self, g: &GatewayGraph, src: NodeId, dst: NodeId) -> Result<Vec<Vec<NodeId>>, GraphError> {
        let (s, d) = self.endpoints(g, src, dst)?;
        let to_dst = bfs_levels(g, d, Some(self.max_len));
        let mut paths: Vec<Vec<NodeId>> = Vec::new();
        if to_dst[s] == UNREACHED {
            return Ok(paths);
        }
        let mut walk = Walk::new(g, d, &to_dst, self.max_len);
        walk.visited[s] = true;
        walk.stack.push(s);
        walk.run(s, 0, &mut |stack| {
            if paths.len() as u64 >= self.cap {
                return Err(GraphError::TooManyPaths { cap: self.cap });
            }
            paths.push(stack.iter().map(|&i| g.id_at(i)).chain([dst]).collect());
            Ok(())
        })?;
        paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(paths)
    }

    /// Greedy set of internally vertex-disjoint paths: candidates are taken
    /// in [`enumerate`](Self::enumerate) order and accepted when no interior
    /// gateway is already used by an accepted path.
    ///
    /// Instead of materializing every path, each length level is searched
    /// for the lexicographically first path that avoids used gateways.
    /// Rejected candidates contain a used gateway, so skipping them during
    /// the search selects the same set.
    pub fn disjoint_set(&self, g: &GatewayGraph, src: NodeId, dst: NodeId) -> Result<Vec<Vec<NodeId>>, GraphError> {
        let (s, d) = self.endpoints(g, src, dst)?;
        let to_dst = bfs_levels(g, d, Some(self.max_len));
        let mut accepted = Vec::new();
        if to_dst[s] == UNREACHED {
            return Ok(accepted);
        }
        if g.link(s, d).is_some() {
            accepted.push(vec![src, dst]);
        }
        let mut used = vec![false; g.node_count()];
        used[s] = true;
        used[d] = true;
        let mut stack = Vec::with_capacity(self.max_len + 1);
        for len in 2..=self.max_len {
            for first in g.neighbors_by_index(s) {
                let w = first.index;
                if used[w] || to_dst[w] as usize > len - 1 {
                    continue;
                }
                stack.clear();
                stack.push(s);
                stack.push(w);
                used[w] = true;
                if first_path(g, d, &to_dst, &mut used, &mut stack, len - 1) {
                    // interior gateways (already marked) stay used
                    accepted.push(stack.iter().map(|&i| g.id_at(i)).chain([dst]).collect());
                } else {
                    used[w] = false;
                }
            }
        }
        Ok(accepted)
    }

    pub fn disjoint(&self, g: &GatewayGraph, src: NodeId, dst: NodeId) -> Result<usize, GraphError> {
        Ok(self.disjoint_set(g, src, dst)?.len())
    }
}

/// Depth-first walk toward a fixed destination with hop-level pruning.
struct Walk<'a> {
    graph: &'a GatewayGraph,
    dst: usize,
    to_dst: &'a [u32],
    max_len: usize,
    visited: Vec<bool>,
    stack: Vec<usize>,
}

impl<'a> Walk<'a> {
    fn new(graph: &'a GatewayGraph, dst: usize, to_dst: &'a [u32], max_len: usize) -> Self {
        Self {
            graph,
            dst,
            to_dst,
            max_len,
            visited: vec![false; graph.node_count()],
            stack: Vec::with_capacity(max_len + 1),
        }
    }

    /// `u` sits at `depth` edges from the source; `emit` sees the stack
    /// (source..=u) each time an edge `u`-dst completes a path.
    fn run<F>(&mut self, u: usize, depth: usize, emit: &mut F) -> Result<(), GraphError>
    where
        F: FnMut(&[usize]) -> Result<(), GraphError>,
    {
        for nb in self.graph.neighbors_by_index(u) {
            let v = nb.index;
            if v == self.dst {
                emit(&self.stack)?;
            } else if !self.visited[v]
                && self.to_dst[v] != UNREACHED
                && depth + 1 + self.to_dst[v] as usize <= self.max_len
            {
                self.visited[v] = true;
                self.stack.push(v);
                self.run(v, depth + 1, emit)?;
                self.stack.pop();
                self.visited[v] = false;
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn fan_out(
    g: &GatewayGraph,
    u: usize,
    len: usize,
    max_len: usize,
    visited: &mut [bool],
    counts: &mut [u64],
    total: &mut u64,
    cap: u64,
) -> Result<(), GraphError> {
    for nb in g.neighbors_by_index(u) {
        let v = nb.index;
        if visited[v] {
            continue;
        }
        counts[v] += 1;
        *total += 1;
        if *total > cap {
            return Err(GraphError::TooManyPaths { cap });
        }
        if len < max_len {
            visited[v] = true;
            fan_out(g, v, len + 1, max_len, visited, counts, total, cap)?;
            visited[v] = false;
        }
    }
    Ok(())
}

/// Extends `stack` (ending at a non-destination node) by exactly
/// `remaining` edges to `dst`, avoiding `used`, choosing the
/// lexicographically smallest continuation. Marks the new interior nodes
/// as used on success; leaves `used` and `stack` untouched on failure.
fn first_path(
    g: &GatewayGraph,
    dst: usize,
    to_dst: &[u32],
    used: &mut [bool],
    stack: &mut Vec<usize>,
    remaining: usize,
) -> bool {
    let u = *stack.last().expect("non-empty stack");
    if remaining == 1 {
        return g.link(u, dst).is_some();
    }
    for nb in g.neighbors_by_index(u) {
        let v = nb.index;
        if used[v] || to_dst[v] == UNREACHED || to_dst[v] as usize > remaining - 1 {
            continue;
        }
        used[v] = true;
        stack.push(v);
        if first_path(g, dst, to_dst, used, stack, remaining - 1) {
            return true;
        }
        stack.pop();
        used[v] = false;
    }
    false
}

/// Simple paths from `src` to `dst` with at most `max_len` edges.
pub fn count_simple_paths(g: &GatewayGraph, src: NodeId, dst: NodeId, max_len: usize) -> Result<u64, GraphError> {
    PathSearch::new(max_len).count(g, src, dst)
}

/// Every simple path from `src` to `dst` with at most `max_len` edges,
/// ordered by length then lexicographically. Fails with
/// [`GraphError::TooManyPaths`] beyond [`DEFAULT_PATH_CAP`].
pub fn enumerate_simple_paths(
    g: &GatewayGraph,
    src: NodeId,
    dst: NodeId,
    max_len: usize,
) -> Result<Vec<Vec<NodeId>>, GraphError> {
    PathSearch::new(max_len).enumerate(g, src, dst)
}

/// Size of the greedy internally vertex-disjoint path set.
pub fn disjoint_paths(g: &GatewayGraph, src: NodeId, dst: NodeId, max_len: usize) -> Result<usize, GraphError> {
    PathSearch::new(max_len).disjoint(g, src, dst)
}
