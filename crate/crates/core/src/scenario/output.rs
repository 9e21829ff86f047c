//! CSV tables and the JSON run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ScenarioConfig;
use super::monte_carlo::MonteCarloResult;
use crate::error::{Error, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

/// Writes through a temporary sibling and renames, so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("csv: {e}")))
}

pub fn metrics_csv(res: &MonteCarloResult) -> Result<Vec<u8>> {
    to_csv(&res.rows)
}

#[derive(Serialize)]
struct TrajectoryRow {
    epoch: usize,
    uav_x: f64,
    uav_y: f64,
    uav_z: f64,
    gu_x: f64,
    gu_y: f64,
    gu_z: f64,
    est_x: f64,
    est_y: f64,
    est_z: f64,
    bias_x: f64,
    bias_y: f64,
    bias_z: f64,
}

/// World-frame positions of one representative episode, plus the Monte-Carlo mean estimate bias.
pub fn trajectory_csv(res: &MonteCarloResult) -> Result<Vec<u8>> {
    let ep = res.representative().ok_or(Error::AllEpisodesFailed)?;
    to_csv(
        ep.records
            .iter()
            .zip(&res.bias)
            .enumerate()
            .map(|(k, (r, b))| TrajectoryRow {
                epoch: k + 1,
                uav_x: r.uav_position.x,
                uav_y: r.uav_position.y,
                uav_z: r.uav_position.z,
                gu_x: r.gu_position.x,
                gu_y: r.gu_position.y,
                gu_z: r.gu_position.z,
                est_x: r.gu_estimate.x,
                est_y: r.gu_estimate.y,
                est_z: r.gu_estimate.z,
                bias_x: b.x,
                bias_y: b.y,
                bias_z: b.z,
            }),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub episodes: usize,
    pub failed: usize,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub mc_runs: usize,
    pub n_epochs: usize,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub policies: Vec<PolicySummary>,
    /// Full configuration; feeding it back reproduces the run.
    pub config: ScenarioConfig,
}

/// `git describe` output captured at build time, or the crate version outside a checkout.
pub fn version_string() -> String {
    match option_env!("SE3_ISAC_DESCRIBE") {
        Some(d) if !d.is_empty() => format!("se3-isac {d}"),
        _ => format!("se3-isac v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Writes `<policy>_metrics.csv` and `<policy>_trajectory.csv`; returns the file names.
pub fn write_policy_files(dir: &Path, res: &MonteCarloResult) -> Result<Vec<String>> {
    let name = res.policy.name();
    let files = [
        (format!("{name}_metrics.csv"), metrics_csv(res)?),
        (format!("{name}_trajectory.csv"), trajectory_csv(res)?),
    ];
    let mut out = Vec::new();
    for (file, bytes) in files {
        write_atomic(&dir.join(&file), &bytes)?;
        out.push(file);
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| io_err(&path, e))?;
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
