use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anonsat::analysis::DEFAULT_SAMPLES;
use anonsat::anonymity::{full_report_with, MetricsError};
use anonsat::geodata::{
    build_graph, filter_close, generate_synthetic, largest_component, parse_dataset, GeoPoint, DEFAULT_MIN_SEPARATION_M,
};
use anonsat::graph::{GatewayGraph, GraphError, PathSearch, DEFAULT_PATH_CAP};
use anonsat::simulator::mean;
use anonsat::{run_campaign, sweep, KeyValueConfig, MetricsReport, SimConfig, SimResult, SyntheticKind};
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::output::{emit, file_name, manifest_path_for, opt_sig6, sig6, RunManifest};
use crate::Common;

const DEFAULT_DISTANCE_LEVELS: std::ops::RangeInclusive<usize> = 0..=10;

/// Config file overlaid with command-line overrides.
fn resolve(common: &Common, overrides: &[(&str, Option<String>)]) -> Result<KeyValueConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            text.parse::<KeyValueConfig>().with_context(|| format!("in {}", path.display()))?
        }
        None => KeyValueConfig::default(),
    };
    let flags = [
        ("profile.name", common.profile.clone()),
        ("profile.range_m", common.range.map(|v| v.to_string())),
        ("profile.rate_bps", common.rate.map(|v| v.to_string())),
    ];
    for (key, value) in flags.iter().chain(overrides) {
        if let Some(v) = value {
            cfg.set(key, v.clone())?;
        }
    }
    Ok(cfg)
}

struct Input {
    bytes: Vec<u8>,
    name: String,
}

fn read_input(path: &Path) -> Result<Input> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok(Input { bytes, name })
}

/// Parses the dataset, links it with `profile` and keeps the largest
/// connected component.
fn load_graph(path: &Path, input: &Input, profile: &anonsat::LinkProfile) -> Result<GatewayGraph> {
    let dataset = parse_dataset(&input.bytes[..], &input.name).with_context(|| format!("in {}", path.display()))?;
    let full = build_graph(&dataset, profile);
    let g = largest_component(&full);
    if g.node_count() < full.node_count() {
        log::warn!(
            "{}: graph is disconnected at {} m range; using the largest component ({} of {} gateways)",
            path.display(),
            profile.max_range_m,
            g.node_count(),
            full.node_count()
        );
    }
    if g.is_empty() {
        bail!("{}: dataset has no points", path.display());
    }
    Ok(g)
}

fn manifest_header(out: Option<&Path>) -> String {
    out.map(|p| format!("# manifest: {}\n", file_name(&manifest_path_for(p)))).unwrap_or_default()
}

fn write_with_manifest(out: Option<&Path>, body: &str, manifest: RunManifest) -> Result<()> {
    emit(out, body)?;
    if let Some(path) = out {
        let mut manifest = manifest;
        manifest.outputs.push(file_name(path));
        manifest.write(&manifest_path_for(path))?;
    }
    Ok(())
}

fn dataset_csv(points: &[GeoPoint], with_id: bool) -> String {
    let mut s = String::from(if with_id { "lat,lon,id\n" } else { "lat,lon\n" });
    for (i, p) in points.iter().enumerate() {
        if with_id {
            let _ = writeln!(s, "{},{},{i}", p.lat, p.lon);
        } else {
            let _ = writeln!(s, "{},{}", p.lat, p.lon);
        }
    }
    s
}

/// Right-aligned plain-text table.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let cols: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        cols.join("  ") + "\n"
    };
    let mut s = line(header.to_vec());
    for r in rows {
        s += &line(r.iter().map(String::as_str).collect());
    }
    s
}

pub fn generate(kind: &str, n: usize, extent: f64, seed: u64, out: Option<&Path>) -> Result<()> {
    let kind: SyntheticKind = kind.parse().map_err(|e: String| anyhow!(e))?;
    if !(extent.is_finite() && extent > 0.0) {
        bail!("--extent must be a positive number of meters, got {extent}");
    }
    let dataset = generate_synthetic(kind, n, extent, seed);
    let body = manifest_header(out) + &dataset_csv(&dataset.points, false);
    let params = json!({ "kind": kind, "n": n, "extent_m": extent, "seed": seed });
    let mut manifest = RunManifest::new("generate", None, params);
    manifest.seeds.push(seed);
    write_with_manifest(out, &body, manifest)
}

pub fn preprocess(input_path: &Path, common: &Common, min_sep: Option<f64>) -> Result<()> {
    let cfg = resolve(common, &[("geodata.min_sep_m", min_sep.map(|v| v.to_string()))])?;
    let profile = cfg.profile()?;
    let min_sep: f64 = cfg.get_or("geodata.min_sep_m", DEFAULT_MIN_SEPARATION_M)?;
    if !(min_sep.is_finite() && min_sep >= 0.0) {
        bail!("config key `geodata.min_sep_m`: must be a non-negative number of meters");
    }
    let input = read_input(input_path)?;
    let dataset =
        parse_dataset(&input.bytes[..], &input.name).with_context(|| format!("in {}", input_path.display()))?;
    let close = filter_close(&dataset, min_sep);
    let cc = largest_component(&build_graph(&close, &profile));
    if cc.is_empty() {
        log::warn!("{}: no points left after preprocessing", input_path.display());
    }

    let out = common.out.as_deref();
    let body = manifest_header(out) + &dataset_csv(cc.points(), true);
    let params = json!({ "profile": profile, "min_sep_m": min_sep });
    let manifest =
        RunManifest::new("preprocess", common.config.as_deref(), params).with_input(input_path, &input.bytes);
    write_with_manifest(out, &body, manifest)?;

    let summary = table(
        &["dataset", "total", "close", "cc"],
        &[vec![input.name, dataset.len().to_string(), close.len().to_string(), cc.node_count().to_string()]],
    );
    if out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

pub fn metrics(
    input_path: &Path,
    common: &Common,
    max_hops: Option<usize>,
    per_gateway: bool,
    format: &str,
    path_cap: Option<u64>,
) -> Result<()> {
    let cfg = resolve(common, &[("protocol.max_hops", max_hops.map(|v| v.to_string()))])?;
    let profile = cfg.profile()?;
    let max_hops = cfg.protocol()?.max_hops;
    let cap = path_cap.unwrap_or(DEFAULT_PATH_CAP);
    let input = read_input(input_path)?;
    let g = load_graph(input_path, &input, &profile)?;

    let search = PathSearch::new(max_hops).with_cap(cap);
    let report = full_report_with(&g, &search, &profile.name).map_err(|e| match e {
        MetricsError::Graph(GraphError::TooManyPaths { cap }) => anyhow!(
            "path enumeration exceeded {cap} paths at max_hops {max_hops}; lower --max-hops or raise --path-cap"
        ),
        other => other.into(),
    })?;

    let out = common.out.as_deref();
    let body = match format {
        "csv" => metrics_csv(&report, per_gateway, out),
        _ => metrics_json(&report, per_gateway, out)?,
    };
    let params = json!({
        "profile": profile,
        "max_hops": max_hops,
        "path_cap": cap,
        "per_gateway": per_gateway,
        "format": format,
    });
    let manifest = RunManifest::new("metrics", common.config.as_deref(), params).with_input(input_path, &input.bytes);
    write_with_manifest(out, &body, manifest)?;
    if out.is_some() {
        let mut header = vec!["dataset", "gateways"];
        header.extend(MetricsReport::CSV_COLUMNS);
        let mut row = vec![input.name, report.gateways.to_string()];
        row.extend(metrics_cells(&report));
        print!("{}", table(&header, &[row]));
    }
    Ok(())
}

fn metrics_cells(report: &MetricsReport) -> Vec<String> {
    let r = report.row();
    vec![sig6(r[0]), report.min_anonymity_set.to_string(), sig6(r[2]), sig6(r[3]), sig6(r[4]), sig6(r[5])]
}

fn metrics_csv(report: &MetricsReport, per_gateway: bool, out: Option<&Path>) -> String {
    let mut s = manifest_header(out);
    let _ = writeln!(s, "profile,max_hops,gateways,{}", MetricsReport::CSV_COLUMNS.join(","));
    let _ =
        writeln!(s, "{},{},{},{}", report.profile, report.max_hops, report.gateways, metrics_cells(report).join(","));
    if per_gateway {
        s += "# per-gateway\nid,anonymity_set,effective_set\n";
        for gm in &report.per_gateway {
            let _ = writeln!(s, "{},{},{}", gm.id, gm.anonymity_set, sig6(gm.effective_set));
        }
    }
    s
}

fn metrics_json(report: &MetricsReport, per_gateway: bool, out: Option<&Path>) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    let obj = value.as_object_mut().expect("report serializes to an object");
    if !per_gateway {
        obj.remove("per_gateway");
    }
    if let Some(path) = out {
        obj.insert("manifest".into(), file_name(&manifest_path_for(path)).into());
    }
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub struct SimulateOptions {
    pub max_hops: Option<usize>,
    pub seed: Option<u64>,
    pub clients: Option<Vec<usize>>,
    pub runs: Option<usize>,
    pub duration: Option<f64>,
}

#[derive(Serialize)]
struct Campaign<'a> {
    client_count: usize,
    runs: &'a [SimResult],
}

pub fn simulate(input_path: &Path, common: &Common, opts: SimulateOptions) -> Result<()> {
    let clients_flag = opts.clients.as_ref().map(|l| l.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    let cfg = resolve(
        common,
        &[
            ("protocol.max_hops", opts.max_hops.map(|v| v.to_string())),
            ("simulation.seed", opts.seed.map(|v| v.to_string())),
            ("simulation.clients", clients_flag),
            ("simulation.runs", opts.runs.map(|v| v.to_string())),
            ("simulation.duration_s", opts.duration.map(|v| v.to_string())),
        ],
    )?;
    let base = cfg.simulation()?;
    let counts = cfg.get_list::<usize>("simulation.clients")?.unwrap_or_else(|| vec![base.client_count]);
    let input = read_input(input_path)?;
    let g = load_graph(input_path, &input, &base.profile)?;

    let mut campaigns = Vec::with_capacity(counts.len());
    for &count in &counts {
        let sim = SimConfig { client_count: count, ..base.clone() };
        sim.validate().context("config key `simulation.clients`")?;
        let runs = run_campaign(&g, &sim).with_context(|| format!("simulating {count} clients"))?;
        campaigns.push((count, runs));
    }

    let summary_header = ["clients", "runs", "sessions", "mean_tls_s", "mean_upload_s"];
    let summary_rows: Vec<Vec<String>> = campaigns
        .iter()
        .map(|(count, runs)| {
            let tls: Vec<f64> = runs.iter().flat_map(|r| r.sessions.iter().map(|s| s.tls_delay_s)).collect();
            let up: Vec<f64> = runs.iter().flat_map(|r| r.sessions.iter().filter_map(|s| s.upload_s)).collect();
            vec![
                count.to_string(),
                runs.len().to_string(),
                tls.len().to_string(),
                opt_sig6(mean(&tls)),
                opt_sig6(mean(&up)),
            ]
        })
        .collect();
    print!("{}", table(&summary_header, &summary_rows));

    let Some(dir) = common.out.as_deref() else { return Ok(()) };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let manifest_name = "manifest.json";
    let comment = format!("# manifest: {manifest_name}\n");

    let doc = json!({
        "manifest": manifest_name,
        "campaigns": campaigns.iter().map(|(c, runs)| Campaign { client_count: *c, runs }).collect::<Vec<_>>(),
    });
    let mut files = vec![("results.json", serde_json::to_string_pretty(&doc)? + "\n")];

    let mut runs_csv =
        comment.clone() + "clients,run,seed,sessions,events,mean_tls_s,median_tls_s,mean_upload_s,median_upload_s\n";
    let mut sessions_csv = comment.clone() + "clients,run,seed,client,origin,output,hops,tls_delay_s,upload_s\n";
    for (count, runs) in &campaigns {
        for (i, r) in runs.iter().enumerate() {
            let _ = writeln!(
                runs_csv,
                "{count},{i},{},{},{},{},{},{},{}",
                r.seed,
                r.sessions.len(),
                r.event_count,
                opt_sig6(r.mean_tls_s),
                opt_sig6(r.median_tls_s),
                opt_sig6(r.mean_upload_s),
                opt_sig6(r.median_upload_s)
            );
            for s in &r.sessions {
                let _ = writeln!(
                    sessions_csv,
                    "{count},{i},{},{},{},{},{},{},{}",
                    r.seed,
                    s.client,
                    s.origin,
                    s.output,
                    s.hops,
                    sig6(s.tls_delay_s),
                    opt_sig6(s.upload_s)
                );
            }
        }
    }
    let mut summary_csv = comment + &summary_header.join(",") + "\n";
    for row in &summary_rows {
        summary_csv += &(row.join(",") + "\n");
    }
    files.push(("runs.csv", runs_csv));
    files.push(("sessions.csv", sessions_csv));
    files.push(("summary.csv", summary_csv));

    let params = json!({ "simulation": base, "client_counts": counts });
    let mut manifest =
        RunManifest::new("simulate", common.config.as_deref(), params).with_input(input_path, &input.bytes);
    manifest.seeds = (0..base.runs as u64).map(|i| base.base_seed.wrapping_add(i)).collect();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        manifest.outputs.push(name.to_owned());
    }
    manifest.write(&dir.join(manifest_name))
}

pub fn distance(
    input_path: &Path,
    common: &Common,
    levels: Option<Vec<usize>>,
    samples: Option<usize>,
    seed: Option<u64>,
    no_bias: bool,
) -> Result<()> {
    let cfg = resolve(
        common,
        &[
            ("analysis.samples", samples.map(|v| v.to_string())),
            ("simulation.seed", seed.map(|v| v.to_string())),
            ("protocol.bias_enabled", no_bias.then(|| "false".to_owned())),
        ],
    )?;
    let profile = cfg.profile()?;
    let protocol = cfg.protocol()?;
    let samples: usize = cfg.get_or("analysis.samples", DEFAULT_SAMPLES)?;
    let seed: u64 = cfg.get_or("simulation.seed", 0)?;
    let levels = levels.unwrap_or_else(|| DEFAULT_DISTANCE_LEVELS.collect());
    let input = read_input(input_path)?;
    let g = load_graph(input_path, &input, &profile)?;

    let study = sweep(&g, &levels, samples, seed, &protocol)?;
    let out = common.out.as_deref();
    let mut body = manifest_header(out) + "max_hops,mean_m,stddev_m,n\n";
    for e in &study.entries {
        let _ = writeln!(body, "{},{},{},{}", e.max_hops, sig6(e.mean_m), sig6(e.stddev_m), e.samples);
    }
    let params = json!({
        "profile": profile,
        "protocol": protocol,
        "max_hops": levels,
        "samples": samples,
        "seed": seed,
    });
    let mut manifest =
        RunManifest::new("distance", common.config.as_deref(), params).with_input(input_path, &input.bytes);
    manifest.seeds = (0..levels.len() as u64).map(|i| seed.wrapping_add(i)).collect();
    write_with_manifest(out, &body, manifest)
}
