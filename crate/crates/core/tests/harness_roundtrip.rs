//! The experiment harness through its public surface: records round-trip
//! through disk, reruns are byte-identical after stripping wall-clock
//! fields, the config hash ignores TOML formatting, and failures are
//! persisted rather than swallowed.

use isopde_core::harness::{
    config_hash, run, strip_runtime_fields, validate_config, ExperimentRecord, RunOptions,
    RunStatus, CSV_COLUMNS,
};

const TAIL: &str = r#"
name = "tail_roundtrip"
scenario = "infinite_annulus_diag"
seed = 9

[geometry]
dim = 2
r1 = 0.0
r2 = 1.0
sigma = { kind = "constant", value = 1.0 }
phi = { kind = "quadratic", coeff = 0.5 }
fiber = { kind = "point" }

[params]
r_max = 6.0
expect_converging = false
"#;

const AFFINE: &str = r#"
name = "affine_roundtrip"
scenario = "affine_symmetry"
seed = 5

[geometry]
dim = 2
r1 = 0.0
r2 = 1.0
sigma = { kind = "constant", value = 1.0 }
phi = { kind = "constant", value = 0.0 }
fiber = { kind = "circle", circumference = 6.283185307179586 }

[grids]
n_r = [8, 12]

[nonlinearity]
kind = "affine"
slope = -1.0
offset = 1.0

[boundary]
c1 = 0.0
c2 = 0.0
"#;

fn opts(dir: &std::path::Path) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        seed: None,
    }
}

#[test]
fn records_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = validate_config(TAIL).unwrap();
    let record = run(&config, &opts(dir.path())).unwrap();
    assert_eq!(record.status, RunStatus::Passed);
    let loaded = ExperimentRecord::load(&record.json_path(dir.path())).unwrap();
    assert_eq!(loaded.name, record.name);
    assert_eq!(loaded.config_hash, record.config_hash);
    assert_eq!(loaded.scalars, record.scalars);
    assert_eq!(loaded.flags, record.flags);
}

#[test]
fn reruns_are_identical_after_stripping_wall_clock_fields() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = validate_config(AFFINE).unwrap();
    let a = run(&config, &opts(dir_a.path())).unwrap();
    let b = run(&config, &opts(dir_b.path())).unwrap();
    assert_eq!(a.status, RunStatus::Passed);
    let mut ja: serde_json::Value = serde_json::from_slice(&a.to_json().unwrap()).unwrap();
    let mut jb: serde_json::Value = serde_json::from_slice(&b.to_json().unwrap()).unwrap();
    strip_runtime_fields(&mut ja);
    strip_runtime_fields(&mut jb);
    assert_eq!(ja, jb, "runs differ beyond wall-clock fields");
}

#[test]
fn config_hash_ignores_formatting_but_not_content() {
    let reformatted = TAIL.replace("seed = 9", "seed    =     9").replace("\n\n", "\n# note\n\n");
    let base = config_hash(&validate_config(TAIL).unwrap());
    assert_eq!(base, config_hash(&validate_config(&reformatted).unwrap()));
    let changed = TAIL.replace("r_max = 6.0", "r_max = 7.0");
    assert_ne!(base, config_hash(&validate_config(&changed).unwrap()));
}

#[test]
fn csv_table_has_the_fixed_column_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = validate_config(AFFINE).unwrap();
    let record = run(&config, &opts(dir.path())).unwrap();
    let csv = std::fs::read_to_string(record.csv_path(dir.path())).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), record.grids.len());
    for row in rows {
        assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
    }
}

#[test]
fn seed_override_is_recorded_and_changes_nothing_else_structurally() {
    let dir = tempfile::tempdir().unwrap();
    let config = validate_config(AFFINE).unwrap();
    let record = run(
        &config,
        &RunOptions {
            out_dir: dir.path().to_path_buf(),
            seed: Some(777),
        },
    )
    .unwrap();
    assert_eq!(record.seed, 777);
    assert_eq!(record.status, RunStatus::Passed);
}

#[test]
fn failed_expectations_are_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let flipped = TAIL.replace("expect_converging = false", "expect_converging = true");
    let config = validate_config(&flipped).unwrap();
    let record = run(&config, &opts(dir.path())).unwrap();
    assert_eq!(record.status, RunStatus::Failed);
    assert!(!record.failures.is_empty());
    let loaded = ExperimentRecord::load(&record.json_path(dir.path())).unwrap();
    assert_eq!(loaded.status, RunStatus::Failed);
    assert_eq!(loaded.failures, record.failures);
}
