use std::fs;
use std::path::Path;
use std::sync::Arc;

use mechbio_core::io::{parse_vtk, read_series, Config, Geometry};
use mechbio_core::orchestrator::{
    checkpoint_name, RunMode, Simulation, CELLS_CSV, MECHANICS_CSV, SUMMARY_CSV,
};
use mechbio_core::poro::{PoroBoundary, PoroLoads};
use mechbio_core::stimulus::RateMode;
use mechbio_core::stokes::CoupledSolver;

fn small(dir: &Path, mode: RunMode, steps: usize) -> Config {
    let mut c = Config::default();
    c.mesh.nx = 6;
    c.mesh.ny = 6;
    c.run.mode = mode;
    c.run.n_steps = steps;
    c.run.output_stride = 4;
    c.run.out_dir = dir.to_path_buf();
    c
}

#[test]
fn biology_run_writes_series_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), RunMode::BiologyOnly, 6);
    let (_, report) = mechbio_core::orchestrator::run(cfg, None).unwrap();
    assert_eq!(report.steps, 6);
    let (header, rows) = read_series(&dir.path().join(CELLS_CSV)).unwrap();
    assert_eq!(header[0], "step");
    assert_eq!(header.last().unwrap(), "window_occupancy");
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5][0], "6");
    for step in [0, 4, 6] {
        let text = fs::read_to_string(dir.path().join(format!("cells_{step:05}.vtk"))).unwrap();
        let vtk = parse_vtk(&text).unwrap();
        assert_eq!(vtk.points.len(), 3 * 72);
        assert!(vtk.field("c1").is_some() && vtk.field("S").is_some());
    }
    assert!(!dir.path().join("cells_00002.vtk").exists());
    let (_, summary) = read_series(&dir.path().join(SUMMARY_CSV)).unwrap();
    assert!(summary.iter().any(|r| r[0] == "conservation_drift"));
    assert!(fs::read_to_string(dir.path().join("report.txt"))
        .unwrap()
        .contains("wall_time_s: "));
}

#[test]
fn restart_reproduces_the_remaining_rows() {
    let full = tempfile::tempdir().unwrap();
    let cfg = small(full.path(), RunMode::Fallback, 8);
    let mut cfg = cfg;
    cfg.mesh.geometry = Geometry::PorousWithInflow;
    cfg.run.vtk = false;
    let (sim, _) = mechbio_core::orchestrator::run(cfg.clone(), None).unwrap();
    let reference = sim.state().cells.clone().unwrap();

    let part = tempfile::tempdir().unwrap();
    let mut first = cfg.clone();
    first.run.out_dir = part.path().to_path_buf();
    first.run.n_steps = 3;
    first.run.checkpoint_stride = Some(3);
    mechbio_core::orchestrator::run(first, None).unwrap();
    let mut rest = cfg.clone();
    rest.run.out_dir = part.path().to_path_buf();
    let mesh = rest.build_mesh(None).unwrap();
    let mut sim = Simulation::restore(rest, mesh, &part.path().join(checkpoint_name(3))).unwrap();
    assert_eq!(sim.state().step, 3);
    sim.run().unwrap();
    let resumed = sim.state().cells.clone().unwrap();
    assert_eq!(resumed, reference);
    for f in [CELLS_CSV, MECHANICS_CSV, SUMMARY_CSV] {
        assert_eq!(
            fs::read(full.path().join(f)).unwrap(),
            fs::read(part.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn restore_refuses_another_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), RunMode::BiologyOnly, 2);
    cfg.run.checkpoint_stride = Some(1);
    cfg.run.vtk = false;
    mechbio_core::orchestrator::run(cfg.clone(), None).unwrap();
    let mut other = cfg.clone();
    other.mesh.nx = 7;
    let mesh = other.build_mesh(None).unwrap();
    let err = Simulation::restore(cfg, mesh, &dir.path().join(checkpoint_name(1))).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(err.to_string().contains("mesh"), "{err}");
}

#[test]
fn zero_state_checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), RunMode::Fallback, 2);
    cfg.mesh.geometry = Geometry::PorousWithInflow;
    let mesh = cfg.build_mesh(None).unwrap();
    let sim = Simulation::new(cfg.clone(), mesh.clone()).unwrap();
    let path = dir.path().join("zero.json");
    sim.checkpoint(&path).unwrap();
    let back = Simulation::restore(cfg, mesh, &path).unwrap();
    assert_eq!(back.state().mech, sim.state().mech);
    assert!(back
        .state()
        .mech
        .as_ref()
        .unwrap()
        .wall()
        .eta
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn empty_window_equals_constant_minimum_rates() {
    let a = tempfile::tempdir().unwrap();
    let mut mapped = small(a.path(), RunMode::Fallback, 5);
    mapped.mesh.geometry = Geometry::PorousWithInflow;
    mapped.stimulus.s_min = 1e12;
    mapped.stimulus.s_max = 2e12;
    mapped.run.vtk = false;
    let (m, _) = mechbio_core::orchestrator::run(mapped.clone(), None).unwrap();

    let b = tempfile::tempdir().unwrap();
    let mut constant = mapped.clone();
    constant.run.out_dir = b.path().to_path_buf();
    constant.run.mode = RunMode::BiologyOnly;
    constant.stimulus.mode = RateMode::ConstantRates;
    constant.stimulus.alpha1 = constant.stimulus.alpha_min;
    constant.stimulus.alpha2 = constant.stimulus.alpha_min;
    let (c, _) = mechbio_core::orchestrator::run(constant, None).unwrap();
    let (x, y) = (
        m.state().cells.as_ref().unwrap(),
        c.state().cells.as_ref().unwrap(),
    );
    for (u, v) in x.c1.iter().chain(&x.c2).zip(y.c1.iter().chain(&y.c2)) {
        assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
    }
}

#[test]
fn mechanics_only_matches_the_standalone_solver() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), RunMode::MechanicsOnly, 3);
    cfg.mesh.geometry = Geometry::ChannelOverPorous;
    cfg.mesh.nx = 8;
    cfg.mesh.ny = 8;
    let (sim, report) = mechbio_core::orchestrator::run(cfg.clone(), None).unwrap();
    assert_eq!(report.steps, 3);
    assert!(!dir.path().join(CELLS_CSV).exists());
    let (_, rows) = read_series(&dir.path().join(MECHANICS_CSV)).unwrap();
    assert_eq!(rows.len(), 3);

    let mesh = cfg.build_mesh(None).unwrap();
    let solver = CoupledSolver::new(
        Arc::clone(&mesh),
        cfg.mechanics,
        PoroBoundary::default(),
        cfg.interface,
        0.1,
        cfg.poro.mode,
    )
    .unwrap();
    let mut s = solver.zero_state();
    for _ in 0..3 {
        s = solver.step(&s, &PoroLoads::none()).unwrap();
    }
    match sim.state().mech.as_ref().unwrap() {
        mechbio_core::orchestrator::MechState::Coupled(c) => assert_eq!(c, &s),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fallback_needs_an_inflow_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), RunMode::Fallback, 1);
    let err = mechbio_core::orchestrator::run(cfg, None).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("Inflow"), "{err}");
}
