//! Flat `section.key = value` configuration files.
//!
//! ```text
//! # 5 km LoRa mesh, 10 clients
//! profile.name = lora-subghz
//! protocol.max_hops = 3
//! simulation.clients = 1,10,50
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::linkmodel::{builtin_profile, LinkProfile};
use crate::protocol::ProtocolConfig;
use crate::simulator::SimConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: invalid value `{value}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("unknown profile `{0}`; give profile.range_m and profile.rate_bps for a custom one")]
    UnknownProfile(String),
}

pub const KNOWN_KEYS: &[&str] = &[
    "profile.name",
    "profile.range_m",
    "profile.rate_bps",
    "protocol.max_hops",
    "protocol.gateway_timeout_s",
    "protocol.timeout_mode",
    "protocol.bias_enabled",
    "protocol.weight_min",
    "protocol.weight_max",
    "geodata.min_sep_m",
    "simulation.clients",
    "simulation.duration_s",
    "simulation.wan_delay_s",
    "simulation.payload_bytes",
    "simulation.mtu_bytes",
    "simulation.syn_bytes",
    "simulation.synack_bytes",
    "simulation.ack_clienthello_bytes",
    "simulation.serverhello_bytes",
    "simulation.runs",
    "simulation.seed",
    "analysis.samples",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl FromStr for KeyValueConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.contains('.') {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }
}

impl KeyValueConfig {
    /// Sets a key, overriding any earlier value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_owned()));
        }
        self.entries.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// All resolved entries in key order.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Invalid {
                    key: key.to_owned(),
                    value: v.to_owned(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                item.trim().parse::<T>().map_err(|e| ConfigError::Invalid {
                    key: key.to_owned(),
                    value: v.to_owned(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Built-in profile by `profile.name`, or a custom one when range and
    /// rate are given. Defaults to `lora-subghz`.
    pub fn profile(&self) -> Result<LinkProfile, ConfigError> {
        let name = self.raw("profile.name").unwrap_or("lora-subghz").to_owned();
        let range: Option<f64> = self.get("profile.range_m")?;
        let rate: Option<f64> = self.get("profile.rate_bps")?;
        let base = builtin_profile(&name);
        let (range, rate) = match (range, rate, &base) {
            (Some(r), Some(b), _) => (r, b),
            (r, b, Some(p)) => (r.unwrap_or(p.max_range_m), b.unwrap_or(p.max_rate_bps)),
            _ => return Err(ConfigError::UnknownProfile(name)),
        };
        LinkProfile::new(name, range, rate).map_err(|e| ConfigError::Invalid {
            key: "profile.range_m".into(),
            value: format!("{range} / {rate}"),
            reason: e.to_string(),
        })
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, ConfigError> {
        let d = ProtocolConfig::default();
        let cfg = ProtocolConfig {
            max_hops: self.get_or("protocol.max_hops", d.max_hops)?,
            gateway_timeout: self.get_or("protocol.gateway_timeout_s", d.gateway_timeout)?,
            timeout_mode: self.get_or("protocol.timeout_mode", d.timeout_mode)?,
            bias_enabled: self.get_or("protocol.bias_enabled", d.bias_enabled)?,
            weight_min: self.get_or("protocol.weight_min", d.weight_min)?,
            weight_max: self.get_or("protocol.weight_max", d.weight_max)?,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid {
            key: "protocol".into(),
            value: String::new(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Simulation settings. `simulation.clients` may be a list; the first
    /// entry is used here.
    pub fn simulation(&self) -> Result<SimConfig, ConfigError> {
        let d = SimConfig::default();
        let clients =
            self.get_list::<usize>("simulation.clients")?.and_then(|l| l.first().copied()).unwrap_or(d.client_count);
        let mut hs = d.handshake;
        hs.syn = self.get_or("simulation.syn_bytes", hs.syn)?;
        hs.synack = self.get_or("simulation.synack_bytes", hs.synack)?;
        hs.ack_client_hello = self.get_or("simulation.ack_clienthello_bytes", hs.ack_client_hello)?;
        hs.server_hello = self.get_or("simulation.serverhello_bytes", hs.server_hello)?;
        let cfg = SimConfig {
            profile: self.profile()?,
            protocol: self.protocol()?,
            client_count: clients,
            sim_duration_s: self.get_or("simulation.duration_s", d.sim_duration_s)?,
            wan_delay_s: self.get_or("simulation.wan_delay_s", d.wan_delay_s)?,
            payload_bytes: self.get_or("simulation.payload_bytes", d.payload_bytes)?,
            mtu_bytes: self.get_or("simulation.mtu_bytes", d.mtu_bytes)?,
            handshake: hs,
            runs: self.get_or("simulation.runs", d.runs)?,
            base_seed: self.get_or("simulation.seed", d.base_seed)?,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid {
            key: "simulation".into(),
            value: String::new(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::TimeoutMode;

    #[test]
    fn parses_sections_comments_and_overrides() {
        let text = "# comment\n\nprotocol.max_hops = 5\nprotocol.timeout_mode=messages\nprotocol.gateway_timeout_s = 12\nprotocol.max_hops = 4\n";
        let cfg: KeyValueConfig = text.parse().unwrap();
        let p = cfg.protocol().unwrap();
        assert_eq!(p.max_hops, 4);
        assert_eq!(p.timeout_mode, TimeoutMode::Messages);
        assert_eq!(p.gateway_timeout, 12.0);
    }

    #[test]
    fn errors_name_the_key_or_line() {
        assert_eq!("foo".parse::<KeyValueConfig>(), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!("a.b = 1".parse::<KeyValueConfig>(), Err(ConfigError::UnknownKey("a.b".into())));
        let cfg: KeyValueConfig = "protocol.max_hops = many".parse().unwrap();
        let err = cfg.protocol().unwrap_err();
        assert!(err.to_string().contains("protocol.max_hops"), "{err}");
        let cfg: KeyValueConfig = "simulation.mtu_bytes = 0".parse().unwrap();
        assert!(cfg.simulation().unwrap_err().to_string().contains("mtu"));
    }

    #[test]
    fn profiles_resolve() {
        let cfg = KeyValueConfig::default();
        assert_eq!(cfg.profile().unwrap().name, "lora-subghz");
        let cfg: KeyValueConfig = "profile.name = ltem2".parse().unwrap();
        assert_eq!(cfg.profile().unwrap().max_rate_bps, 4e6);
        let cfg: KeyValueConfig =
            "profile.name = mine\nprofile.range_m = 2000\nprofile.rate_bps = 9600".parse().unwrap();
        let p = cfg.profile().unwrap();
        assert_eq!((p.name.as_str(), p.max_range_m, p.max_rate_bps), ("mine", 2000.0, 9600.0));
        let cfg: KeyValueConfig = "profile.name = mine".parse().unwrap();
        assert_eq!(cfg.profile(), Err(ConfigError::UnknownProfile("mine".into())));
    }

    #[test]
    fn simulation_defaults_and_lists() {
        let cfg: KeyValueConfig = "simulation.clients = 10, 50\nsimulation.runs = 2".parse().unwrap();
        let s = cfg.simulation().unwrap();
        assert_eq!((s.client_count, s.runs, s.payload_bytes, s.mtu_bytes), (10, 2, 200_000, 1500));
        assert_eq!(cfg.get_list::<usize>("simulation.clients").unwrap(), Some(vec![10, 50]));
    }
}
