use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Fixed-point rendering with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_owned();
    }
    let magnitude = x.abs().log10().floor() as i32 + 1;
    let decimals = (6 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn opt_sig6(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to rerun a command: resolved parameters, input
/// digest and seeds. Written next to the result files it describes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub parameters: serde_json::Value,
    pub input: Option<PathBuf>,
    pub input_sha256: Option<String>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, parameters: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            config_path: config_path.map(Path::to_path_buf),
            parameters,
            input: None,
            input_sha256: None,
            seeds: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        }
    }

    pub fn with_input(mut self, path: &Path, bytes: &[u8]) -> Self {
        self.input = Some(path.to_path_buf());
        self.input_sha256 = Some(sha256_hex(bytes));
        self
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix_s = unix_now();
        let json = serde_json::to_string_pretty(&self)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Sidecar manifest path for a result file: `<file>.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes `body` to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(2402.0), "2402.00");
        assert_eq!(sig6(50.0), "50.0000");
        assert_eq!(sig6(0.4528), "0.452800");
        assert_eq!(sig6(0.2), "0.200000");
        assert_eq!(sig6(123456789.0), "123456789");
        assert_eq!(sig6(-1.5), "-1.50000");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(opt_sig6(None), "");
    }

    #[test]
    fn manifest_sidecar_name() {
        assert_eq!(
            manifest_path_for(Path::new("/tmp/x/metrics.json")),
            PathBuf::from("/tmp/x/metrics.json.manifest.json")
        );
    }
}
