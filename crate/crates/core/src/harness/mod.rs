//! Config-driven experiment harness: scenario catalogue, TOML schema and
//! validation, deterministic runner, JSON/CSV persistence and SVG plots.
//!
//! The flow is `validate_config` -> [`run`] -> artifacts. A run executes
//! one scenario pipeline (solves, spectra, symmetry metrics, thresholds)
//! deterministically for a given seed and writes `<name>.record.json`,
//! `<name>.csv` with a fixed column set, and the `<name>.*.svg` charts,
//! all atomically (write-temp-then-rename). Records are written even for
//! failing runs; the pass/fail verdict and each failed assertion live in
//! the record itself.

pub mod config;
pub mod plots;
pub mod record;
pub mod runner;

pub use config::{
    validate_config, load_config, BoundaryConfig, ExperimentConfig, FiberConfig, GeometryConfig,
    GridConfig, ParamsConfig, Scenario,
};
pub use plots::{emit_plots, PlotOutput};
pub use record::{
    config_hash, loglog_slope, strip_runtime_fields, write_atomic, ExperimentRecord, GridSummary,
    RunStatus, Timing, CSV_COLUMNS,
};
pub use runner::{run, RunOptions};
