//! LPWAN technology profiles and the distance-dependent link rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("relative distance {0} outside [0, 1]")]
    RelativeDistance(f64),
    #[error("distance {distance_m} m exceeds the {max_range_m} m range of `{profile}`")]
    OutOfRange { profile: String, distance_m: f64, max_range_m: f64 },
    #[error("profile `{0}`: range and rate must be positive and finite")]
    InvalidProfile(String),
}

/// Maximum range and peak data rate of a wireless technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub name: String,
    pub max_range_m: f64,
    pub max_rate_bps: f64,
}

impl LinkProfile {
    pub fn new(name: impl Into<String>, max_range_m: f64, max_rate_bps: f64) -> Result<Self, LinkError> {
        let name = name.into();
        let valid = |v: f64| v.is_finite() && v > 0.0;
        if !valid(max_range_m) || !valid(max_rate_bps) {
            return Err(LinkError::InvalidProfile(name));
        }
        Ok(Self { name, max_range_m, max_rate_bps })
    }
}

/// The four range/rate combinations evaluated for the gateway mesh.
pub fn builtin_profiles() -> Vec<LinkProfile> {
    [
        ("lora-subghz", 5_000.0, 50_000.0),
        ("dash7", 5_000.0, 166_000.0),
        ("lora24-ltem1", 1_000.0, 1_000_000.0),
        ("ltem2", 1_000.0, 4_000_000.0),
    ]
    .into_iter()
    .map(|(name, range, rate)| LinkProfile { name: name.to_owned(), max_range_m: range, max_rate_bps: rate })
    .collect()
}

pub fn builtin_profile(name: &str) -> Option<LinkProfile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}

/// Fraction of the peak rate available at relative distance `d_rel`
/// (distance over maximum range): `e^(-2 d_rel)`.
pub fn relative_rate(d_rel: f64) -> Result<f64, LinkError> {
    if !(0.0..=1.0).contains(&d_rel) {
        return Err(LinkError::RelativeDistance(d_rel));
    }
    Ok((-2.0 * d_rel).exp())
}

/// Effective bit rate of a link spanning `distance_m`. Symmetric in direction.
pub fn link_rate(distance_m: f64, profile: &LinkProfile) -> Result<f64, LinkError> {
    if distance_m > profile.max_range_m {
        return Err(LinkError::OutOfRange {
            profile: profile.name.clone(),
            distance_m,
            max_range_m: profile.max_range_m,
        });
    }
    let d_rel = distance_m / profile.max_range_m;
    Ok(profile.max_rate_bps * relative_rate(d_rel)?)
}
