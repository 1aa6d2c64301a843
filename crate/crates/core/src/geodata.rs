//! Gateway datasets: CSV ingestion, synthetic layouts and the preprocessing
//! pipeline (proximity filter, range graph, largest connected component).

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GatewayGraph, NodeId};
use crate::linkmodel::{link_rate, LinkProfile};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default minimum separation for [`filter_close`].
pub const DEFAULT_MIN_SEPARATION_M: f64 = 200.0;

/// Meters per degree of latitude on the sphere.
const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * PI / 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("i/o error while reading dataset: {0}")]
    Io(String),
}

/// A gateway position in WGS84 decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(id: NodeId, lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { id, lat, lon })
    }
}

/// An ordered set of gateway positions. Row order is significant: the
/// proximity filter keeps the first of two close points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub points: Vec<GeoPoint>,
}

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), points: Vec::new() }
    }

    /// Builds a dataset from raw coordinates, assigning ids in order.
    pub fn from_coords(
        name: impl Into<String>,
        coords: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<Self, GeoError> {
        let points = coords
            .into_iter()
            .enumerate()
            .map(|(id, (lat, lon))| GeoPoint::new(id, lat, lon))
            .collect::<Result<_, _>>()?;
        Ok(Self { name: name.into(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn renumbered(name: &str, points: impl IntoIterator<Item = GeoPoint>) -> Self {
        let points = points.into_iter().enumerate().map(|(id, p)| GeoPoint { id, ..p }).collect();
        Self { name: name.to_owned(), points }
    }
}

/// Parses a `lat,lon` CSV. An optional trailing `id` column (as written by
/// the preprocessing step) is accepted and ignored; ids are always
/// reassigned `0..n` in row order. Lines starting with `#` are skipped.
pub fn parse_dataset<R: Read>(source: R, name: &str) -> Result<Dataset, GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let mut dataset = Dataset::new(name);
    let mut header_seen = false;
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => GeoError::Parse { line: pos.line(), message: e.to_string() },
            None => GeoError::Io(e.to_string()),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !header_seen {
            let fields: Vec<&str> = record.iter().collect();
            if fields != ["lat", "lon"] && fields != ["lat", "lon", "id"] {
                return Err(GeoError::Parse {
                    line,
                    message: format!("expected header `lat,lon`, found `{}`", fields.join(",")),
                });
            }
            header_seen = true;
            continue;
        }
        if record.len() < 2 || record.len() > 3 {
            return Err(GeoError::Parse { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let coord = |i: usize, what: &str| -> Result<f64, GeoError> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| GeoError::Parse { line, message: format!("{what} `{}` is not a number", &record[i]) })
        };
        let lat = coord(0, "latitude")?;
        let lon = coord(1, "longitude")?;
        let point = GeoPoint::new(dataset.points.len(), lat, lon)
            .map_err(|e| GeoError::Parse { line, message: e.to_string() })?;
        dataset.points.push(point);
    }
    Ok(dataset)
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Greedy keep-first proximity filter: a point survives iff it is at least
/// `min_sep` meters from every previously kept point.
pub fn filter_close(dataset: &Dataset, min_sep: f64) -> Dataset {
    let mut kept: Vec<GeoPoint> = Vec::new();
    for p in &dataset.points {
        if kept.iter().all(|k| haversine_m(k, p) >= min_sep) {
            kept.push(*p);
        }
    }
    Dataset::renumbered(&dataset.name, kept)
}

/// Connects every pair of points whose distance is within the profile range.
///
/// The dataset is expected to be proximity-filtered already; this is not
/// checked.
pub fn build_graph(dataset: &Dataset, profile: &LinkProfile) -> GatewayGraph {
    let points = &dataset.points;
    let mut edges = Vec::new();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let distance_m = haversine_m(a, b);
            if distance_m <= profile.max_range_m {
                let rate_bps = link_rate(distance_m, profile).expect("distance within range has a defined rate");
                edges.push(Edge { a: a.id, b: b.id, distance_m, rate_bps });
            }
        }
    }
    GatewayGraph::from_edges(points.clone(), edges).expect("dataset ids are unique and pairs are distinct")
}

/// Induced subgraph on the largest connected component. Ties go to the
/// component with the smallest member id. Node ids are preserved.
pub fn largest_component(graph: &GatewayGraph) -> GatewayGraph {
    let n = graph.node_count();
    let mut component = vec![usize::MAX; n];
    let mut best: Option<(usize, usize)> = None; // (size, label)
    let mut label = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        component[start] = label;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for nb in graph.neighbors_by_index(u) {
                if component[nb.index] == usize::MAX {
                    component[nb.index] = label;
                    queue.push_back(nb.index);
                }
            }
        }
        // Dense indices follow ascending id order, so the first component
        // discovered at a given size holds the smallest id.
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, label));
        }
        label += 1;
    }
    match best {
        None => graph.clone(),
        Some((_, keep)) => graph.induced_by_index(|i| component[i] == keep),
    }
}

/// Synthetic gateway layouts used as fixtures and stand-ins for real data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Uniform over a square of side `extent` centered at (0°, 0°).
    Uniform,
    /// Gaussian clusters of about 50 points each.
    Clustered,
    /// All points within a few meters of each other, so any positive range
    /// yields a complete graph.
    Complete,
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "clustered" => Ok(Self::Clustered),
            "complete" => Ok(Self::Complete),
            other => Err(format!("unknown layout `{other}` (uniform|clustered|complete)")),
        }
    }
}

/// Points per Gaussian cluster in the `clustered` layout.
const CLUSTER_SIZE: usize = 50;
/// Side of the square the `complete` layout packs its points into; the
/// diagonal stays below 10 m.
const COMPLETE_SIDE_M: f64 = 5.0;

/// Deterministic synthetic layout for a given seed.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, extent_m: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = extent_m / 2.0;
    let offsets: Vec<(f64, f64)> = match kind {
        SyntheticKind::Uniform => {
            (0..n).map(|_| (rng.random_range(-half..=half), rng.random_range(-half..=half))).collect()
        }
        SyntheticKind::Clustered => {
            let clusters = n.div_ceil(CLUSTER_SIZE);
            let centers: Vec<(f64, f64)> =
                (0..clusters).map(|_| (rng.random_range(-half..=half), rng.random_range(-half..=half))).collect();
            let spread = Normal::new(0.0, extent_m / 20.0).expect("positive spread");
            (0..n)
                .map(|i| {
                    let (cx, cy) = centers[i % clusters];
                    (cx + spread.sample(&mut rng), cy + spread.sample(&mut rng))
                })
                .collect()
        }
        SyntheticKind::Complete => {
            let h = COMPLETE_SIDE_M / 2.0;
            (0..n).map(|_| (rng.random_range(-h..=h), rng.random_range(-h..=h))).collect()
        }
    };
    let name = format!("synthetic-{}", kind_name(kind));
    Dataset::from_coords(name, offsets.into_iter().map(|(east, north)| offset_to_coords(east, north)))
        .expect("synthetic extents stay within coordinate bounds")
}

fn kind_name(kind: SyntheticKind) -> &'static str {
    match kind {
        SyntheticKind::Uniform => "uniform",
        SyntheticKind::Clustered => "clustered",
        SyntheticKind::Complete => "complete",
    }
}

/// Equirectangular placement of a metric offset around (0°, 0°).
fn offset_to_coords(east_m: f64, north_m: f64) -> (f64, f64) {
    let lat = (north_m / METERS_PER_DEGREE).clamp(-90.0, 90.0);
    let lon = east_m / (METERS_PER_DEGREE * lat.to_radians().cos());
    (lat, lon.clamp(-180.0, 180.0))
}
