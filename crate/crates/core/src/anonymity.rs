//! Anonymity metrics of an output gateway: how many gateways could be the
//! origin (anonymity set), how evenly the path structure spreads that
//! suspicion (effective set), and graph-wide path redundancy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{reachable_within, GatewayGraph, GraphError, NodeId, PathSearch};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("need at least 2 gateways, graph has {0}")]
    TooSmall(usize),
    #[error("graph is not connected; extract the largest component first")]
    Disconnected,
}

/// Number of gateways within `max_hops` of `out`, excluding `out`.
pub fn anonymity_set(g: &GatewayGraph, out: NodeId, max_hops: usize) -> Result<usize, MetricsError> {
    Ok(reachable_within(g, out, max_hops)?.len())
}

/// `2^H` where `H` is the entropy of the distribution that weighs each
/// reachable gateway by its number of simple paths (length ≤ `max_hops`)
/// to `out`. Returns 0 when nothing is reachable.
pub fn effective_set(g: &GatewayGraph, out: NodeId, max_hops: usize) -> Result<f64, MetricsError> {
    effective_set_with(g, out, &PathSearch::new(max_hops))
}

pub fn effective_set_with(g: &GatewayGraph, out: NodeId, search: &PathSearch) -> Result<f64, MetricsError> {
    if !g.contains(out) {
        return Err(GraphError::UnknownNode(out).into());
    }
    if search.max_len() == 0 {
        log::warn!("gateway {out}: empty anonymity set, effective set undefined (reported as 0)");
        return Ok(0.0);
    }
    // Paths are undirected, so counts from `out` equal counts to `out`.
    let counts = search.counts_from(g, out)?;
    Ok(effective_size(&counts).unwrap_or_else(|| {
        log::warn!("gateway {out}: empty anonymity set, effective set undefined (reported as 0)");
        0.0
    }))
}

/// `2^H` of the distribution proportional to the non-zero `counts`.
fn effective_size(counts: &[u64]) -> Option<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let total = total as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Some(entropy.exp2())
}

fn require_pairs(g: &GatewayGraph) -> Result<usize, MetricsError> {
    match g.node_count() {
        n if n < 2 => Err(MetricsError::TooSmall(n)),
        n => Ok(n),
    }
}

fn pair_count(n: usize) -> f64 {
    (n * (n - 1) / 2) as f64
}

/// Mean number of simple paths (length ≤ `max_hops`) over unordered pairs.
pub fn node2node_paths_avg(g: &GatewayGraph, max_hops: usize) -> Result<f64, MetricsError> {
    node2node_with(g, &PathSearch::new(max_hops))
}

fn node2node_with(g: &GatewayGraph, search: &PathSearch) -> Result<f64, MetricsError> {
    let n = require_pairs(g)?;
    if search.max_len() == 0 {
        return Ok(0.0);
    }
    let ids: Vec<NodeId> = g.node_ids().collect();
    let total: u64 = ids
        .par_iter()
        .enumerate()
        .map(|(i, &u)| -> Result<u64, GraphError> { Ok(search.counts_from(g, u)?[i + 1..].iter().sum()) })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(total as f64 / pair_count(n))
}

/// Mean size of the greedy internally-disjoint path set over unordered
/// pairs.
pub fn unique_paths_avg(g: &GatewayGraph, max_hops: usize) -> Result<f64, MetricsError> {
    unique_with(g, &PathSearch::new(max_hops))
}

fn unique_with(g: &GatewayGraph, search: &PathSearch) -> Result<f64, MetricsError> {
    let n = require_pairs(g)?;
    if search.max_len() == 0 {
        return Ok(0.0);
    }
    let ids: Vec<NodeId> = g.node_ids().collect();
    let total: usize = ids
        .par_iter()
        .enumerate()
        .map(|(i, &u)| -> Result<usize, GraphError> { ids[i + 1..].iter().map(|&v| search.disjoint(g, u, v)).sum() })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(total as f64 / pair_count(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayMetrics {
    pub id: NodeId,
    pub anonymity_set: usize,
    pub effective_set: f64,
}

/// One row of the anonymity table plus the per-gateway values behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub profile: String,
    pub max_hops: usize,
    pub gateways: usize,
    pub avg_anonymity_set: f64,
    pub min_anonymity_set: usize,
    pub avg_effective_set: f64,
    pub min_effective_set: f64,
    pub avg_node2node_paths: f64,
    pub avg_unique_paths: f64,
    pub per_gateway: Vec<GatewayMetrics>,
}

impl MetricsReport {
    pub const CSV_COLUMNS: [&'static str; 6] = ["avg_anon", "min_anon", "avg_eff", "min_eff", "avg_n2n", "avg_unique"];

    /// Aggregates in table column order.
    pub fn row(&self) -> [f64; 6] {
        [
            self.avg_anonymity_set,
            self.min_anonymity_set as f64,
            self.avg_effective_set,
            self.min_effective_set,
            self.avg_node2node_paths,
            self.avg_unique_paths,
        ]
    }
}

pub fn full_report(g: &GatewayGraph, max_hops: usize, profile_name: &str) -> Result<MetricsReport, MetricsError> {
    full_report_with(g, &PathSearch::new(max_hops), profile_name)
}

/// Like [`full_report`] with an explicit path-enumeration cap.
pub fn full_report_with(
    g: &GatewayGraph,
    search: &PathSearch,
    profile_name: &str,
) -> Result<MetricsReport, MetricsError> {
    let n = require_pairs(g)?;
    if !g.is_connected() {
        return Err(MetricsError::Disconnected);
    }
    let max_hops = search.max_len();
    let ids: Vec<NodeId> = g.node_ids().collect();
    let per_gateway = ids
        .par_iter()
        .map(|&id| {
            Ok(GatewayMetrics {
                id,
                anonymity_set: anonymity_set(g, id, max_hops)?,
                effective_set: effective_set_with(g, id, search)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;

    let avg = |f: &dyn Fn(&GatewayMetrics) -> f64| per_gateway.iter().map(f).sum::<f64>() / n as f64;
    Ok(MetricsReport {
        profile: profile_name.to_owned(),
        max_hops,
        gateways: n,
        avg_anonymity_set: avg(&|m| m.anonymity_set as f64),
        min_anonymity_set: per_gateway.iter().map(|m| m.anonymity_set).min().unwrap_or(0),
        avg_effective_set: avg(&|m| m.effective_set),
        min_effective_set: per_gateway.iter().map(|m| m.effective_set).fold(f64::INFINITY, f64::min),
        avg_node2node_paths: node2node_with(g, search)?,
        avg_unique_paths: unique_with(g, search)?,
        per_gateway,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn path3() -> GatewayGraph {
        GatewayGraph::topology(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn cycle(n: usize) -> GatewayGraph {
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        GatewayGraph::topology(n, &pairs).unwrap()
    }

    #[test]
    fn anonymity_set_examples() {
        assert_eq!(anonymity_set(&GatewayGraph::complete(51), 0, 3).unwrap(), 50);
        assert_eq!(anonymity_set(&GatewayGraph::topology(2, &[]).unwrap(), 0, 3).unwrap(), 0);
        assert_eq!(anonymity_set(&path3(), 1, 1).unwrap(), 2);
        assert!(anonymity_set(&path3(), 8, 1).is_err());
    }

    #[test]
    fn effective_set_examples() {
        assert_abs_diff_eq!(effective_set(&GatewayGraph::complete(51), 0, 3).unwrap(), 50.0, epsilon = 1e-9);
        let star = GatewayGraph::topology(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_abs_diff_eq!(effective_set(&star, 0, 2).unwrap(), 3.0, epsilon = 1e-12);
        let pair = GatewayGraph::topology(2, &[(0, 1)]).unwrap();
        assert_eq!(effective_set(&pair, 0, 3).unwrap(), 1.0);
        let isolated = GatewayGraph::topology(2, &[]).unwrap();
        assert_eq!(effective_set(&isolated, 0, 3).unwrap(), 0.0);
        assert_eq!(effective_set(&pair, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn effective_set_weights_by_paths() {
        // From 0 with max_hops 2: node 1 has paths 0-1 and 0-2-1, node 2
        // has 0-2 and 0-1-2, node 3 only 0-1-3.
        let g = GatewayGraph::topology(4, &[(0, 1), (0, 2), (1, 2), (1, 3)]).unwrap();
        let p = [2.0 / 5.0, 2.0 / 5.0, 1.0 / 5.0];
        let h: f64 = p.iter().map(|&x: &f64| -x * x.log2()).sum();
        assert_relative_eq!(effective_set(&g, 0, 2).unwrap(), h.exp2(), max_relative = 1e-12);
    }

    #[test]
    fn pair_average_examples() {
        let k51 = GatewayGraph::complete(51);
        assert_eq!(node2node_paths_avg(&k51, 3).unwrap(), 2_402.0);
        assert_eq!(unique_paths_avg(&k51, 3).unwrap(), 50.0);
        assert_eq!(node2node_paths_avg(&path3(), 3).unwrap(), 1.0);
        assert_eq!(unique_paths_avg(&path3(), 3).unwrap(), 1.0);
        assert_eq!(node2node_paths_avg(&GatewayGraph::complete(3), 2).unwrap(), 2.0);
        assert_eq!(unique_paths_avg(&cycle(4), 3).unwrap(), 2.0);
        let single = GatewayGraph::topology(1, &[]).unwrap();
        assert_eq!(node2node_paths_avg(&single, 3), Err(MetricsError::TooSmall(1)));
        assert_eq!(unique_paths_avg(&single, 3), Err(MetricsError::TooSmall(1)));
    }

    #[test]
    fn full_report_examples() {
        let r = full_report(&GatewayGraph::complete(51), 3, "lora-subghz").unwrap();
        assert_eq!(r.avg_anonymity_set, 50.0);
        assert_eq!(r.min_anonymity_set, 50);
        assert_abs_diff_eq!(r.avg_effective_set, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.min_effective_set, 50.0, epsilon = 1e-9);
        assert_eq!(r.avg_node2node_paths, 2_402.0);
        assert_eq!(r.avg_unique_paths, 50.0);
        assert_eq!(r.per_gateway.len(), 51);

        let r = full_report(&path3(), 3, "x").unwrap();
        assert_eq!(r.avg_anonymity_set, 2.0);
        assert_eq!(r.min_anonymity_set, 2);

        let r = full_report(&GatewayGraph::topology(2, &[(0, 1)]).unwrap(), 3, "x").unwrap();
        assert_eq!(r.row(), [1.0; 6]);

        let split = GatewayGraph::topology(3, &[(0, 1)]).unwrap();
        assert_eq!(full_report(&split, 3, "x"), Err(MetricsError::Disconnected));
    }

    #[test]
    fn path_cap_surfaces_as_error() {
        let k9 = GatewayGraph::complete(9);
        let err = full_report_with(&k9, &PathSearch::new(6).with_cap(1_000), "x").unwrap_err();
        assert_eq!(err, MetricsError::Graph(GraphError::TooManyPaths { cap: 1_000 }));
    }

    #[test]
    fn vertex_transitive_graphs_are_uniform() {
        for g in [cycle(7), cycle(10), GatewayGraph::complete(6)] {
            let r = full_report(&g, 3, "x").unwrap();
            let first = &r.per_gateway[0];
            for m in &r.per_gateway {
                assert_eq!(m.anonymity_set, first.anonymity_set);
                assert_relative_eq!(m.effective_set, first.effective_set, max_relative = 1e-12);
            }
        }
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..=12).prop_flat_map(|n| {
            let all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let m = all.len();
            (Just(n), proptest::sample::subsequence(all, 0..=m))
        })
    }

    proptest! {
        #[test]
        fn effective_never_exceeds_anonymity((n, edges) in random_graph(), h in 1usize..=4) {
            let g = GatewayGraph::topology(n, &edges).unwrap();
            for out in 0..n {
                let anon = anonymity_set(&g, out, h).unwrap() as f64;
                let eff = effective_set(&g, out, h).unwrap();
                prop_assert!(eff <= anon * (1.0 + 1e-12));
            }
        }

        #[test]
        fn effective_set_is_relabeling_invariant((n, edges) in random_graph(), h in 1usize..=4, shift in 1usize..12) {
            let g = GatewayGraph::topology(n, &edges).unwrap();
            let perm = |v: usize| (v * 7 + shift) % n;
            prop_assume!((0..n).map(perm).collect::<std::collections::BTreeSet<_>>().len() == n);
            let relabeled: Vec<_> = edges.iter().map(|&(a, b)| (perm(a), perm(b))).collect();
            let h2 = GatewayGraph::topology(n, &relabeled).unwrap();
            for v in 0..n {
                let a = effective_set(&g, v, h).unwrap();
                let b = effective_set(&h2, perm(v), h).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }
}
