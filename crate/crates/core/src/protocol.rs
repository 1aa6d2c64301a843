//! Client routing at the origin gateway: per-client direction/weight bias,
//! biased output-gateway selection within `max_hops`, and rotation after
//! `gateway_timeout`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::GeoPoint;
use crate::graph::{reachable_within, GatewayGraph, GraphError, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bearing undefined between identical positions")]
    SamePosition,
    #[error("invalid protocol config: {0}")]
    Config(String),
}

/// What triggers a new output selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutMode {
    /// `gateway_timeout` seconds after the last selection.
    Time,
    /// After `gateway_timeout` further client messages.
    Messages,
    /// At every session boundary.
    PerSession,
}

impl std::str::FromStr for TimeoutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" => Ok(Self::Time),
            "messages" => Ok(Self::Messages),
            "per_session" => Ok(Self::PerSession),
            other => Err(format!("unknown timeout mode `{other}` (time|messages|per_session)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub max_hops: usize,
    /// Seconds in [`TimeoutMode::Time`], a message count in
    /// [`TimeoutMode::Messages`], unused per session.
    pub gateway_timeout: f64,
    pub timeout_mode: TimeoutMode,
    pub bias_enabled: bool,
    pub weight_min: f64,
    pub weight_max: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            max_hops: 3,
            gateway_timeout: 60.0,
            timeout_mode: TimeoutMode::PerSession,
            bias_enabled: true,
            weight_min: 0.0,
            weight_max: 3.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::Config(m.to_owned()));
        if self.timeout_mode != TimeoutMode::PerSession
            && !(self.gateway_timeout.is_finite() && self.gateway_timeout > 0.0)
        {
            return bad("protocol.gateway_timeout_s must be positive");
        }
        if !(self.weight_min.is_finite() && self.weight_max.is_finite()) || self.weight_min < 0.0 {
            return bad("protocol.weight_min must be a non-negative number");
        }
        if self.weight_min > self.weight_max {
            return bad("protocol.weight_min exceeds protocol.weight_max");
        }
        Ok(())
    }

    fn message_budget(&self) -> u64 {
        self.gateway_timeout.ceil().max(1.0) as u64
    }
}

/// Per-client directional preference. Fixed for the client's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    /// Bearing in radians, `[0, 2π)`, 0 = north, clockwise.
    pub direction: f64,
    /// Concentration of the preference; 0 means uniform selection.
    pub weight: f64,
}

/// Initial great-circle bearing from `from` to `to` in `[0, 2π)`.
pub fn bearing(from: &GeoPoint, to: &GeoPoint) -> Result<f64, ProtocolError> {
    if from.lat == to.lat && from.lon == to.lon {
        return Err(ProtocolError::SamePosition);
    }
    let (phi1, phi2) = (from.lat.to_radians(), to.lat.to_radians());
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(y.atan2(x).rem_euclid(TAU))
}

/// Gateways an origin may hand a client's traffic to: everything within
/// `max_hops`, plus the origin itself.
pub fn candidate_set(g: &GatewayGraph, origin: NodeId, max_hops: usize) -> Result<BTreeSet<NodeId>, ProtocolError> {
    let mut set = reachable_within(g, origin, max_hops)?;
    set.insert(origin);
    Ok(set)
}

/// Weighted draw over a fixed candidate set. Candidate `c` gets weight
/// `exp(weight * cos(bearing(origin, c) - direction))`; the origin (and any
/// gateway sharing its position) gets weight 1.
#[derive(Debug, Clone)]
pub struct OutputSelector {
    candidates: Vec<NodeId>,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl OutputSelector {
    pub fn new(g: &GatewayGraph, origin: NodeId, bias: BiasParams, max_hops: usize) -> Result<Self, ProtocolError> {
        let candidates: Vec<NodeId> = candidate_set(g, origin, max_hops)?.into_iter().collect();
        Ok(Self::from_candidates(g, origin, bias, candidates))
    }

    /// Same as [`new`](Self::new) with a precomputed candidate list
    /// (ascending ids, origin included).
    pub fn from_candidates(g: &GatewayGraph, origin: NodeId, bias: BiasParams, candidates: Vec<NodeId>) -> Self {
        let home = *g.point(origin).expect("origin in graph");
        let weights: Vec<f64> = candidates
            .iter()
            .map(|&c| {
                if c == origin || bias.weight == 0.0 {
                    return 1.0;
                }
                let target = g.point(c).expect("candidate in graph");
                match bearing(&home, target) {
                    Ok(b) => (bias.weight * (b - bias.direction).cos()).exp(),
                    Err(_) => 1.0,
                }
            })
            .collect();
        let index = WeightedIndex::new(&weights).expect("weights are positive and finite");
        Self { candidates, weights, index }
    }

    pub fn candidates(&self) -> &[NodeId] {
        &self.candidates
    }

    /// Selection probability of each candidate, aligned with
    /// [`candidates`](Self::candidates).
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        self.candidates[self.index.sample(rng)]
    }
}

/// When the current output selection expires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Deadline {
    At(f64),
    AfterMessages(u64),
    SessionEnd,
}

/// Routing state the origin keeps for one client.
#[derive(Debug, Clone)]
pub struct ClientRoutingState {
    pub client: usize,
    origin: NodeId,
    bias: BiasParams,
    current_output: NodeId,
    deadline: Deadline,
    timeout_mode: TimeoutMode,
    gateway_timeout: f64,
    message_budget: u64,
    selector: OutputSelector,
}

impl ClientRoutingState {
    /// State with a given bias; the first output is drawn immediately.
    pub fn with_bias<R: Rng + ?Sized>(
        g: &GatewayGraph,
        client: usize,
        origin: NodeId,
        bias: BiasParams,
        cfg: &ProtocolConfig,
        now: f64,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let selector = OutputSelector::new(g, origin, bias, cfg.max_hops)?;
        let current_output = selector.draw(rng);
        let mut state = Self {
            client,
            origin,
            bias,
            current_output,
            deadline: Deadline::SessionEnd,
            timeout_mode: cfg.timeout_mode,
            gateway_timeout: cfg.gateway_timeout,
            message_budget: cfg.message_budget(),
            selector,
        };
        state.reset_deadline(now, 0);
        Ok(state)
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn bias(&self) -> BiasParams {
        self.bias
    }

    pub fn current_output(&self) -> NodeId {
        self.current_output
    }

    pub fn deadline(&self) -> Deadline {
        self.deadline
    }

    pub fn selector(&self) -> &OutputSelector {
        &self.selector
    }

    fn reset_deadline(&mut self, now: f64, messages_sent: u64) {
        self.deadline = match self.timeout_mode {
            TimeoutMode::Time => Deadline::At(now + self.gateway_timeout),
            TimeoutMode::Messages => Deadline::AfterMessages(messages_sent + self.message_budget),
            TimeoutMode::PerSession => Deadline::SessionEnd,
        };
    }

    pub fn is_due(&self, now: f64, messages_sent: u64, session_boundary: bool) -> bool {
        match self.deadline {
            Deadline::At(t) => now >= t,
            Deadline::AfterMessages(m) => messages_sent >= m,
            Deadline::SessionEnd => session_boundary,
        }
    }

    /// Draws a new output (same bias) if the deadline has passed. The new
    /// output may repeat the old one. Returns whether a rotation happened.
    pub fn maybe_rotate<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        messages_sent: u64,
        session_boundary: bool,
        rng: &mut R,
    ) -> bool {
        if !self.is_due(now, messages_sent, session_boundary) {
            return false;
        }
        self.current_output = self.selector.draw(rng);
        self.reset_deadline(now, messages_sent);
        true
    }
}

/// Draws a fresh bias (direction uniform on the circle, weight uniform in
/// the configured range, or 0 when bias is disabled).
pub fn draw_bias<R: Rng + ?Sized>(cfg: &ProtocolConfig, rng: &mut R) -> BiasParams {
    let direction = rng.random_range(0.0..TAU);
    let weight = rng.random_range(cfg.weight_min..=cfg.weight_max);
    BiasParams { direction, weight: if cfg.bias_enabled { weight } else { 0.0 } }
}

/// Sets up a new client at `origin` with a random bias and a first output.
pub fn init_client<R: Rng + ?Sized>(
    g: &GatewayGraph,
    client: usize,
    origin: NodeId,
    cfg: &ProtocolConfig,
    now: f64,
    rng: &mut R,
) -> Result<ClientRoutingState, ProtocolError> {
    if !g.contains(origin) {
        return Err(GraphError::UnknownNode(origin).into());
    }
    let bias = draw_bias(cfg, rng);
    ClientRoutingState::with_bias(g, client, origin, bias, cfg, now, rng)
}

/// One biased draw of an output gateway for the client's origin and bias.
pub fn select_output<R: Rng + ?Sized>(
    g: &GatewayGraph,
    state: &ClientRoutingState,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<NodeId, ProtocolError> {
    Ok(OutputSelector::new(g, state.origin, state.bias, cfg.max_hops)?.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{build_graph, generate_synthetic, haversine_m, Dataset, SyntheticKind};
    use crate::linkmodel::builtin_profile;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn geo(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { id: 0, lat, lon }
    }

    fn chi_square_p(counts: &[u64], expected: &[f64]) -> f64 {
        let stat: f64 = counts.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
        let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        1.0 - dist.cdf(stat)
    }

    #[test]
    fn bearing_examples() {
        let o = geo(0.0, 0.0);
        assert_abs_diff_eq!(bearing(&o, &geo(1.0, 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(bearing(&o, &geo(0.0, 1.0)).unwrap(), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(bearing(&o, &geo(1.0, 1.0)).unwrap(), 0.78534, epsilon = 0.001);
        assert_abs_diff_eq!(bearing(&o, &geo(0.0, -1.0)).unwrap(), 3.0 * FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(bearing(&o, &geo(-1.0, 0.0)).unwrap(), PI, epsilon = 1e-12);
        assert_eq!(bearing(&o, &o), Err(ProtocolError::SamePosition));
    }

    #[test]
    fn candidate_set_examples() {
        let path = GatewayGraph::topology(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(candidate_set(&path, 0, 0).unwrap(), BTreeSet::from([0]));
        assert_eq!(candidate_set(&path, 0, 1).unwrap(), BTreeSet::from([0, 1]));
        let k51 = GatewayGraph::complete(51);
        assert_eq!(candidate_set(&k51, 3, 3).unwrap().len(), 51);
        assert!(candidate_set(&path, 9, 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::default().validate().is_ok());
        let cfg = ProtocolConfig { timeout_mode: TimeoutMode::Time, gateway_timeout: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ProtocolConfig { weight_min: 2.0, weight_max: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ProtocolConfig { weight_min: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_client_examples() {
        let k51 = GatewayGraph::complete(51);
        let cfg = ProtocolConfig { bias_enabled: false, ..Default::default() };
        let s = init_client(&k51, 0, 4, &cfg, 0.0, &mut rng(1)).unwrap();
        assert_eq!(s.bias().weight, 0.0);
        assert!(s.selector().probabilities().iter().all(|&p| (p - 1.0 / 51.0).abs() < 1e-12));

        let cfg = ProtocolConfig::default();
        let a = init_client(&k51, 0, 4, &cfg, 0.0, &mut rng(7)).unwrap();
        let b = init_client(&k51, 0, 4, &cfg, 0.0, &mut rng(7)).unwrap();
        assert_eq!(a.bias(), b.bias());
        assert_eq!(a.current_output(), b.current_output());
        assert!((0.0..TAU).contains(&a.bias().direction));
        assert!((0.0..=3.0).contains(&a.bias().weight));

        let isolated = GatewayGraph::topology(2, &[]).unwrap();
        let s = init_client(&isolated, 0, 1, &cfg, 0.0, &mut rng(2)).unwrap();
        assert_eq!(s.current_output(), 1);

        assert!(init_client(&isolated, 0, 5, &cfg, 0.0, &mut rng(2)).is_err());
    }

    #[test]
    fn max_hops_zero_selects_origin() {
        let k51 = GatewayGraph::complete(51);
        let cfg = ProtocolConfig { max_hops: 0, ..Default::default() };
        let mut r = rng(3);
        let s = init_client(&k51, 0, 9, &cfg, 0.0, &mut r).unwrap();
        for _ in 0..100 {
            assert_eq!(select_output(&k51, &s, &cfg, &mut r).unwrap(), 9);
        }
    }

    #[test]
    fn east_west_odds_follow_bias() {
        let d = Dataset::from_coords("ew", [(0.0, 0.0), (0.0, 0.01), (0.0, -0.01)]).unwrap();
        let g = build_graph(&d, &builtin_profile("lora-subghz").unwrap());
        let bias = BiasParams { direction: FRAC_PI_2, weight: 2.0 };
        let sel = OutputSelector::new(&g, 0, bias, 1).unwrap();
        let mut r = rng(11);
        let mut counts = [0u64; 3];
        for _ in 0..1_000_000 {
            counts[sel.draw(&mut r)] += 1;
        }
        let ratio = counts[1] as f64 / counts[2] as f64;
        let expected = 4.0f64.exp();
        assert!((ratio / expected - 1.0).abs() < 0.05, "ratio {ratio} vs {expected}");
    }

    #[test]
    fn rotation_triggers() {
        let k51 = GatewayGraph::complete(51);
        let mut r = rng(5);

        let cfg = ProtocolConfig { timeout_mode: TimeoutMode::Time, gateway_timeout: 30.0, ..Default::default() };
        let mut s = init_client(&k51, 0, 0, &cfg, 0.0, &mut r).unwrap();
        let before = s.current_output();
        assert!(!s.maybe_rotate(29.9, 0, true, &mut r));
        assert_eq!(s.current_output(), before);
        assert!(s.maybe_rotate(30.0, 0, false, &mut r));
        assert_eq!(s.deadline(), Deadline::At(60.0));

        let cfg = ProtocolConfig { timeout_mode: TimeoutMode::Messages, gateway_timeout: 10.0, ..Default::default() };
        let mut s = init_client(&k51, 0, 0, &cfg, 0.0, &mut r).unwrap();
        assert!(!s.maybe_rotate(1e9, 9, true, &mut r));
        assert!(s.maybe_rotate(0.0, 10, false, &mut r));
        assert_eq!(s.deadline(), Deadline::AfterMessages(20));

        let cfg = ProtocolConfig { timeout_mode: TimeoutMode::PerSession, ..Default::default() };
        let mut s = init_client(&k51, 0, 0, &cfg, 0.0, &mut r).unwrap();
        assert!(!s.maybe_rotate(1e9, 1_000, false, &mut r));
        assert!(s.maybe_rotate(0.0, 0, true, &mut r));
    }

    #[test]
    fn rotations_keep_bias_and_stay_in_candidates() {
        let d = generate_synthetic(SyntheticKind::Uniform, 120, 15_000.0, 8);
        let g = build_graph(&d, &builtin_profile("lora24-ltem1").unwrap());
        let cfg = ProtocolConfig { max_hops: 2, ..Default::default() };
        let mut r = rng(12);
        let mut s = init_client(&g, 0, 17, &cfg, 0.0, &mut r).unwrap();
        let bias = s.bias();
        let allowed = candidate_set(&g, 17, 2).unwrap();
        for _ in 0..500 {
            assert!(s.maybe_rotate(0.0, 0, true, &mut r));
            assert!(allowed.contains(&s.current_output()));
            assert_eq!(s.bias().direction.to_bits(), bias.direction.to_bits());
            assert_eq!(s.bias().weight.to_bits(), bias.weight.to_bits());
        }
    }

    #[test]
    fn forced_rotations_on_clique_are_uniform() {
        let k51 = GatewayGraph::complete(51);
        let cfg = ProtocolConfig { bias_enabled: false, ..Default::default() };
        let mut r = rng(2024);
        let mut s = init_client(&k51, 0, 0, &cfg, 0.0, &mut r).unwrap();
        let mut counts = vec![0u64; 51];
        for _ in 0..1_000 {
            s.maybe_rotate(0.0, 0, true, &mut r);
            counts[s.current_output()] += 1;
        }
        let p = chi_square_p(&counts, &vec![1_000.0 / 51.0; 51]);
        assert!(p > 0.01, "p = {p}");

        let mut counts = vec![0u64; 51];
        for _ in 0..100_000 {
            counts[select_output(&k51, &s, &cfg, &mut r).unwrap()] += 1;
        }
        let p = chi_square_p(&counts, &vec![100_000.0 / 51.0; 51]);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn selection_sequence_is_deterministic() {
        let d = generate_synthetic(SyntheticKind::Uniform, 80, 10_000.0, 1);
        let g = build_graph(&d, &builtin_profile("lora24-ltem1").unwrap());
        let cfg = ProtocolConfig::default();
        let run = |seed| {
            let mut r = rng(seed);
            let mut s = init_client(&g, 0, 5, &cfg, 0.0, &mut r).unwrap();
            (0..200)
                .map(|_| {
                    s.maybe_rotate(0.0, 0, true, &mut r);
                    s.current_output()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(99), run(99));
    }

    #[test]
    fn biased_centroid_moves_toward_direction() {
        let d = generate_synthetic(SyntheticKind::Uniform, 500, 20_000.0, 77);
        let g = build_graph(&d, &builtin_profile("lora-subghz").unwrap());
        let centre = geo(0.0, 0.0);
        let origin =
            g.points().iter().min_by(|a, b| haversine_m(&centre, a).total_cmp(&haversine_m(&centre, b))).unwrap().id;
        let home = *g.point(origin).unwrap();
        let bias = BiasParams { direction: 1.0, weight: 3.0 };
        let centroid = |weight: f64, seed: u64| {
            let sel = OutputSelector::new(&g, origin, BiasParams { weight, ..bias }, 3).unwrap();
            let mut r = rng(seed);
            let (mut lat, mut lon) = (0.0, 0.0);
            for _ in 0..1000 {
                let p = g.point(sel.draw(&mut r)).unwrap();
                lat += p.lat;
                lon += p.lon;
            }
            geo(lat / 1000.0, lon / 1000.0)
        };
        let biased = centroid(3.0, 1);
        let plain = centroid(0.0, 1);
        let shift = bearing(&home, &biased).unwrap();
        let off = (shift - bias.direction + PI).rem_euclid(TAU) - PI;
        assert!(off.abs() < 30f64.to_radians(), "bearing off by {off}");
        assert!(haversine_m(&home, &biased) > haversine_m(&home, &plain));
    }
}
