//! Experiment report assembly and on-disk layout.
//!
//! Every run produces the same artifact set under the output directory:
//! `report.json` with the configuration echo and aggregate statistics,
//! `records.jsonl` with one JSON object per replica in replica order, and
//! any experiment-specific CSV or binary artifacts next to them.  The
//! aggregates map is keyed through `BTreeMap` ordering inside
//! `serde_json::Value`, so serializing the same aggregates twice yields
//! byte-identical text regardless of insertion order or worker count.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use fpp_core::{FppError, Result};

use crate::config::ExperimentConfig;

/// Bumped whenever the report layout changes shape incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything an experiment driver hands back to the writer.
#[derive(Debug)]
pub struct ExperimentOutput {
    /// Aggregate statistics; must be deterministic for a fixed config.
    pub aggregates: serde_json::Value,
    /// One record per replica, already in replica order.
    pub records: Vec<serde_json::Value>,
    /// Extra files to place in the output directory: (file name, bytes).
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Number of replicas that contributed to the aggregates.
    pub replicas_aggregated: u64,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    schema_version: u32,
    kind: &'a str,
    config_sha256: String,
    config: &'a ExperimentConfig,
    replicas_configured: u64,
    replicas_aggregated: u64,
    workers: usize,
    aggregates: &'a serde_json::Value,
    wall_clock_seconds: f64,
}

/// Hex-encoded SHA-256 of the effective configuration's TOML text.
///
/// The hash covers the config after CLI overrides are applied, so two
/// reports with equal hashes were produced from identical inputs.
pub fn config_digest(config: &ExperimentConfig) -> Result<String> {
    let text = toml::to_string(config)
        .map_err(|e| FppError::Config(format!("config not serializable: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("writing to String cannot fail");
    }
    Ok(hex)
}

/// Serializes the report and replica records into `out_dir`.
///
/// The directory is created if missing.  Existing files with the same
/// names are overwritten; unrelated files are left alone.
pub fn write_report(
    out_dir: &Path,
    config: &ExperimentConfig,
    output: &ExperimentOutput,
    wall_clock_seconds: f64,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;

    let document = ReportDocument {
        schema_version: SCHEMA_VERSION,
        kind: config.kind.name(),
        config_sha256: config_digest(config)?,
        config,
        replicas_configured: config.replicas,
        replicas_aggregated: output.replicas_aggregated,
        workers: config.workers,
        aggregates: &output.aggregates,
        wall_clock_seconds,
    };
    let mut report_text = serde_json::to_string_pretty(&document)
        .map_err(|e| FppError::Config(format!("report not serializable: {e}")))?;
    report_text.push('\n');
    fs::write(out_dir.join("report.json"), report_text)?;

    let mut lines = String::new();
    for record in &output.records {
        let line = serde_json::to_string(record)
            .map_err(|e| FppError::Config(format!("record not serializable: {e}")))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    fs::write(out_dir.join("records.jsonl"), lines)?;

    for (name, bytes) in &output.artifacts {
        fs::write(out_dir.join(name), bytes)?;
    }
    Ok(())
}
