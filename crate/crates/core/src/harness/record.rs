//! Experiment records: the JSON artifact, the fixed-column CSV table and
//! atomic file writes.
//!
//! A record is written even when a scenario fails; `status` and `failures`
//! carry the verdict. All wall-time fields end in `_ms` so determinism
//! comparisons can strip them mechanically: two runs of the same config
//! are byte-identical after [`strip_runtime_fields`].

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The fixed, documented CSV column set, one row per grid-level run.
pub const CSV_COLUMNS: [&str; 10] = [
    "h_r",
    "h_f",
    "newton_iters",
    "residual",
    "lambda1",
    "defect_inf",
    "defect_l2",
    "tangential_grad_max",
    "b_max",
    "runtime_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    Failed,
}

/// One grid-level (or one multistart) row. Optional entries stay empty in
/// the CSV when a scenario does not produce them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSummary {
    pub n_r: usize,
    pub n_f: usize,
    pub h_r: f64,
    /// Fiber spacing of axis 0; 0.0 for radial runs.
    pub h_f: f64,
    pub newton_iters: Option<usize>,
    pub residual: Option<f64>,
    pub converged: Option<bool>,
    pub lambda1: Option<f64>,
    pub defect_inf: Option<f64>,
    pub defect_l2: Option<f64>,
    pub tangential_grad_max: Option<f64>,
    pub b_max: Option<f64>,
    pub runtime_ms: f64,
}

impl GridSummary {
    /// A row with only the grid geometry filled in.
    pub fn bare(n_r: usize, n_f: usize, h_r: f64, h_f: f64) -> Self {
        GridSummary {
            n_r,
            n_f,
            h_r,
            h_f,
            newton_iters: None,
            residual: None,
            converged: None,
            lambda1: None,
            defect_inf: None,
            defect_l2: None,
            tangential_grad_max: None,
            b_max: None,
            runtime_ms: 0.0,
        }
    }
}

/// Wall-clock accounting, kept apart from the reproducible payload.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
}

/// Everything one scenario run produced: per-grid rows, named scalar
/// results, named series for the plots, fitted slopes, assertion failures
/// and provenance (config hash + library version).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub scenario: Scenario,
    /// Library version that produced the record.
    pub version: String,
    /// SHA-256 of the canonical JSON form of the validated config.
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    /// Failed scenario assertions and wrapped module errors; empty on pass.
    pub failures: Vec<String>,
    /// Non-fatal observations, e.g. omitted plots.
    pub notes: Vec<String>,
    pub grids: Vec<GridSummary>,
    /// Fitted log-log slopes keyed by series name.
    pub slopes: BTreeMap<String, f64>,
    /// Scenario-specific scalar results.
    pub scalars: BTreeMap<String, f64>,
    /// Scenario-specific boolean results.
    pub flags: BTreeMap<String, bool>,
    /// Named sample series used by the plots (radii, curves, residuals).
    pub series: BTreeMap<String, Vec<f64>>,
    pub timing: Timing,
}

impl ExperimentRecord {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Self {
        ExperimentRecord {
            name: config.name.clone(),
            scenario: config.scenario,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            seed,
            status: RunStatus::Failed,
            failures: Vec::new(),
            notes: Vec::new(),
            grids: Vec::new(),
            slopes: BTreeMap::new(),
            scalars: BTreeMap::new(),
            flags: BTreeMap::new(),
            series: BTreeMap::new(),
            timing: Timing::default(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == RunStatus::Passed
    }

    /// Path of the JSON artifact for this record under `dir`.
    pub fn json_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.record.json", self.name))
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.name))
    }

    /// Serialize to pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Write `<name>.record.json` atomically.
    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.json_path(dir);
        write_atomic(&path, &self.to_json()?)?;
        Ok(path)
    }

    /// Write `<name>.csv` atomically with the fixed column set.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.csv_path(dir);
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(CSV_COLUMNS)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for g in &self.grids {
            wtr.write_record([
                fmt_f64(g.h_r),
                fmt_f64(g.h_f),
                g.newton_iters.map(|v| v.to_string()).unwrap_or_default(),
                g.residual.map(fmt_f64).unwrap_or_default(),
                g.lambda1.map(fmt_f64).unwrap_or_default(),
                g.defect_inf.map(fmt_f64).unwrap_or_default(),
                g.defect_l2.map(fmt_f64).unwrap_or_default(),
                g.tangential_grad_max.map(fmt_f64).unwrap_or_default(),
                g.b_max.map(fmt_f64).unwrap_or_default(),
                fmt_f64(g.runtime_ms),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    /// Load a previously written record (the `plot` CLI verb).
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| {
            Error::Config(format!("{} is not an experiment record: {e}", path.display()))
        })
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip formatting: deterministic and lossless.
    format!("{v}")
}

/// SHA-256 hex digest of the canonical JSON form of a validated config,
/// so equivalent TOML spellings hash alike.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).unwrap_or_default();
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Write via a temp file in the target directory followed by a rename, so
/// readers never observe a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Remove every key ending in `_ms` recursively; what remains must be
/// byte-identical across reruns of the same config.
pub fn strip_runtime_fields(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_ms"));
            for v in map.values_mut() {
                strip_runtime_fields(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items.iter_mut() {
                strip_runtime_fields(v);
            }
        }
        _ => {}
    }
}

/// Least-squares slope of `log10 y` against `log10 x` over the points with
/// both coordinates positive. `None` with fewer than two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
