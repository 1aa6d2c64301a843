//! Monte Carlo study of how far the chosen output gateway lands from the
//! origin as `max_hops` grows.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::haversine_m;
use crate::graph::{GatewayGraph, NodeId};
use crate::protocol::{candidate_set, draw_bias, OutputSelector, ProtocolConfig, ProtocolError};

/// Sample count used when none is given.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("max_hops list is empty")]
    NoLevels,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub max_hops: usize,
    pub mean_m: f64,
    pub stddev_m: f64,
    pub samples: usize,
}

impl DistanceEntry {
    pub fn standard_error(&self) -> f64 {
        self.stddev_m / (self.samples as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStudy {
    pub samples: usize,
    pub seed: u64,
    pub bias_enabled: bool,
    pub entries: Vec<DistanceEntry>,
}

/// Origin-to-output distances for `samples` independent clients: each gets
/// a uniform random origin and a fresh bias, then one protocol selection.
pub fn sample_distances(
    g: &GatewayGraph,
    max_hops: usize,
    samples: usize,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<Vec<f64>, AnalysisError> {
    if g.is_empty() {
        return Err(AnalysisError::EmptyGraph);
    }
    if samples == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let origin = g.id_at(rng.random_range(0..g.node_count()));
        let bias = draw_bias(cfg, &mut rng);
        let list = match candidates.get(&origin) {
            Some(list) => list.clone(),
            None => {
                let list: Vec<NodeId> = candidate_set(g, origin, max_hops)?.into_iter().collect();
                candidates.insert(origin, list.clone());
                list
            }
        };
        let output = OutputSelector::from_candidates(g, origin, bias, list).draw(&mut rng);
        let (a, b) = (g.point(origin), g.point(output));
        out.push(haversine_m(a.expect("origin"), b.expect("output")));
    }
    Ok(out)
}

/// Mean and sample standard deviation of origin-to-output distance at one
/// `max_hops` level.
pub fn distance_to_origin(
    g: &GatewayGraph,
    max_hops: usize,
    samples: usize,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<DistanceEntry, AnalysisError> {
    let d = sample_distances(g, max_hops, samples, seed, cfg)?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = if d.len() > 1 { d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(DistanceEntry { max_hops, mean_m: mean, stddev_m: var.sqrt(), samples })
}

/// One entry per `max_hops` value, the i-th seeded with `seed + i`.
pub fn sweep(
    g: &GatewayGraph,
    max_hops_list: &[usize],
    samples: usize,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<DistanceStudy, AnalysisError> {
    if max_hops_list.is_empty() {
        return Err(AnalysisError::NoLevels);
    }
    let entries = max_hops_list
        .par_iter()
        .enumerate()
        .map(|(i, &h)| distance_to_origin(g, h, samples, seed.wrapping_add(i as u64), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DistanceStudy { samples, seed, bias_enabled: cfg.bias_enabled, entries })
}
