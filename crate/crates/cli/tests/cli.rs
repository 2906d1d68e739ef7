use std::path::PathBuf;
use std::process::{Command, Output};

fn mechbio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mechbio"))
        .args(args)
        .output()
        .unwrap()
}

fn defaults() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/defaults.cfg")
        .display()
        .to_string()
}

#[test]
fn run_cells_writes_series_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mechbio(&[
        "run-cells",
        "--config",
        &defaults(),
        "--steps",
        "2",
        "--out",
        out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("steps: 2"));
    for f in [
        "cells.csv",
        "summary.csv",
        "report.txt",
        "cells_00000.vtk",
        "cells_00002.vtk",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn run_poro_substitutes_an_inflow_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mechbio(&["run-poro", "--steps", "1", "--out", out]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(dir.path().join("mechanics.csv").exists());
    assert!(dir.path().join("mech_00001.vtk").exists());
}

#[test]
fn bad_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "[mechanics]\nnu = 0.6\n").unwrap();
    let o = mechbio(&["check-config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu"));
}

#[test]
fn unknown_key_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("typo.cfg");
    std::fs::write(&p, "[biology]\na1 = 0.01\nbogus = 1\n").unwrap();
    let o = mechbio(&["check-config", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("bogus"), "{err}");
}

#[test]
fn unknown_flag_prints_usage() {
    let o = mechbio(&["run-cells", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_geometry_is_rejected() {
    let o = mechbio(&["mesh-info", "--geometry", "torus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("torus"));
}

#[test]
fn version_and_help_exit_cleanly() {
    let o = mechbio(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
    let o = mechbio(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("run-coupled"));
}

#[test]
fn mesh_info_counts_components() {
    let o = mechbio(&["mesh-info", "--geometry", "three-squares"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("components: 3"), "{s}");
    assert!(s.contains("elements: 1536"), "{s}");
}
