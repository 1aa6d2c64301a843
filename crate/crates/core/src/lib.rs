//! Localization prevention for satellite uplink users: gateway mesh
//! construction from geographic datasets, biased output-gateway selection,
//! a discrete-event simulator for TLS and upload workloads, and anonymity
//! metrics over the mesh.

pub mod analysis;
pub mod anonymity;
pub mod config;
pub mod geodata;
pub mod graph;
pub mod linkmodel;
pub mod protocol;
pub mod simulator;

pub use analysis::{distance_to_origin, sweep, DistanceEntry, DistanceStudy};
pub use anonymity::{full_report, GatewayMetrics, MetricsReport};
pub use config::{ConfigError, KeyValueConfig};
pub use geodata::{Dataset, GeoPoint, SyntheticKind};
pub use graph::{GatewayGraph, GraphError, NodeId, PathSearch};
pub use linkmodel::LinkProfile;
pub use protocol::{BiasParams, ClientRoutingState, ProtocolConfig, TimeoutMode};
pub use simulator::{run_campaign, run_simulation, SimConfig, SimError, SimResult};
