use std::cell::RefCell;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::plan::{RunMode, RunPlan};
use crate::cells::{CellError, CellProblem, CellState, StepRecord};
use crate::io::vtk::{sample, sample_vector, Layout, VtkError, VtkField};
use crate::io::{
    read_series, write_vtk, Checkpoint, CheckpointError, Config, ConfigError, OpenMode,
    SeriesError, SeriesWriter,
};
use crate::mesh::{BoundaryTag, Mesh, Point, Subdomain};
use crate::poro::{
    compute_stress, BiotOperator, PoroBoundary, PoroError, PoroLoads, PoroSolver, PoroState,
};
use crate::stimulus::{compute_stimulus, Coupler, StimulusError, StimulusField};
use crate::stokes::{CoupledSolver, CoupledState, StokesError};
use crate::validate::ValidationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Setup,
    Mechanics,
    Stimulus,
    Biology,
    Output,
    Checkpoint,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::Mechanics => "mechanics",
            Phase::Stimulus => "stimulus",
            Phase::Biology => "biology",
            Phase::Output => "output",
            Phase::Checkpoint => "checkpoint",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunFailure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Cells(#[from] CellError),
    #[error(transparent)]
    Poro(#[from] PoroError),
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Vtk(#[from] VtkError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("step {step}, {phase}: {source}")]
pub struct RunError {
    pub step: usize,
    pub phase: Phase,
    #[source]
    pub source: RunFailure,
}

impl RunError {
    fn at(step: usize, phase: Phase) -> impl FnOnce(RunFailure) -> RunError {
        move |source| RunError {
            step,
            phase,
            source,
        }
    }

    /// Bad input (configuration, mesh tags, incompatible checkpoint) as
    /// opposed to a numerical failure.
    pub fn is_validation(&self) -> bool {
        match &self.source {
            RunFailure::Config(e) => e.is_validation(),
            RunFailure::Invalid(_) => true,
            RunFailure::Cells(e) => matches!(e, CellError::Invalid(_) | CellError::EmptyRegion),
            RunFailure::Poro(e) => matches!(
                e,
                PoroError::Invalid(_) | PoroError::MissingTag(_) | PoroError::EmptyRegion
            ),
            RunFailure::Stokes(e) => matches!(
                e,
                StokesError::Invalid(_)
                    | StokesError::MissingTag(_)
                    | StokesError::EmptyRegion
                    | StokesError::Poro(
                        PoroError::Invalid(_) | PoroError::MissingTag(_) | PoroError::EmptyRegion
                    )
            ),
            RunFailure::Checkpoint(e) => matches!(
                e,
                CheckpointError::HashMismatch { .. } | CheckpointError::Format(_)
            ),
            _ => false,
        }
    }
}

fn fail<E: Into<RunFailure>>(step: usize, phase: Phase) -> impl FnOnce(E) -> RunError {
    move |e| RunError::at(step, phase)(e.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechState {
    Poro(PoroState),
    Coupled(CoupledState),
}

impl MechState {
    pub fn wall(&self) -> &PoroState {
        match self {
            MechState::Poro(s) => s,
            MechState::Coupled(s) => &s.wall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub initial: Option<StepRecord>,
    pub newton_total: usize,
    pub newton_max: usize,
    pub min_c1: f64,
    pub min_c2: f64,
}

/// Everything needed to continue a run: the checkpoint payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    /// last completed step
    pub step: usize,
    pub cells: Option<CellState>,
    pub mech: Option<MechState>,
    pub coupler: Coupler,
    pub stats: RunStats,
}

enum Mechanics {
    Poro(PoroSolver),
    Coupled(CoupledSolver),
}

impl Mechanics {
    fn biot(&self) -> &BiotOperator {
        match self {
            Mechanics::Poro(s) => s.operator(),
            Mechanics::Coupled(s) => s.biot(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: RunMode,
    pub steps: usize,
    pub final_t: f64,
    pub wall_time_s: f64,
    pub newton_total: usize,
    pub newton_mean: f64,
    pub newton_max: usize,
    pub conservation_drift: f64,
    pub min_c1: f64,
    pub min_c2: f64,
    pub final_integrals: [f64; 4],
    pub window_occupancy: f64,
}

impl RunReport {
    /// `key,value` rows; everything except wall time, so reruns compare equal.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let mode = match self.mode {
            RunMode::Coupled => "coupled",
            RunMode::Fallback => "fallback",
            RunMode::BiologyOnly => "biology-only",
            RunMode::MechanicsOnly => "mechanics-only",
        };
        vec![
            ("mode", mode.to_string()),
            ("steps", self.steps.to_string()),
            ("final_t", format!("{:?}", self.final_t)),
            ("newton_total", self.newton_total.to_string()),
            ("newton_mean", format!("{:?}", self.newton_mean)),
            ("newton_max", self.newton_max.to_string()),
            (
                "conservation_drift",
                format!("{:?}", self.conservation_drift),
            ),
            ("min_c1", format!("{:?}", self.min_c1)),
            ("min_c2", format!("{:?}", self.min_c2)),
            ("int_c1", format!("{:?}", self.final_integrals[0])),
            ("int_c2", format!("{:?}", self.final_integrals[1])),
            ("int_h", format!("{:?}", self.final_integrals[2])),
            ("int_k", format!("{:?}", self.final_integrals[3])),
            ("window_occupancy", format!("{:?}", self.window_occupancy)),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.summary() {
            s.push_str(&format!("{k}: {v}\n"));
        }
        s.push_str(&format!("wall_time_s: {:.3}\n", self.wall_time_s));
        s
    }
}

pub const CELLS_CSV: &str = "cells.csv";
pub const MECHANICS_CSV: &str = "mechanics.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn checkpoint_name(step: usize) -> String {
    format!("checkpoint_{step:05}.json")
}

pub struct Simulation {
    config: Config,
    plan: RunPlan,
    mesh: Arc<Mesh>,
    cells: Option<CellProblem>,
    mech: Option<Mechanics>,
    porous: Vec<usize>,
    state: SimState,
    config_hash: String,
    mesh_hash: String,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("plan", &self.plan)
            .field("step", &self.state.step)
            .finish()
    }
}

impl Simulation {
    pub fn new(config: Config, mesh: Arc<Mesh>) -> Result<Self, RunError> {
        let setup = fail(0, Phase::Setup);
        config.validate().map_err(setup)?;
        let plan = config.run.clone();
        let mode = plan.mode;
        let cells = if mode.has_biology() {
            Some(
                CellProblem::new(mesh.clone(), config.biology, config.newton)
                    .map_err(fail(0, Phase::Setup))?,
            )
        } else {
            None
        };
        let dt_mech = plan.dt * plan.mech_cadence as f64;
        let biot_only = mode == RunMode::Fallback
            || (mode == RunMode::MechanicsOnly && !mesh.has_subdomain(Subdomain::Fluid));
        let mech = match mode {
            _ if biot_only => {
                if mesh.tag_measure(BoundaryTag::Inflow) == 0.0 {
                    return Err(fail(0, Phase::Setup)(PoroError::MissingTag(
                        BoundaryTag::Inflow,
                    )));
                }
                let op = BiotOperator::new(
                    mesh.clone(),
                    config.mechanics,
                    PoroBoundary::default(),
                    dt_mech,
                    config.poro.mode,
                )
                .map_err(fail(0, Phase::Setup))?;
                Some(Mechanics::Poro(
                    PoroSolver::new(op).map_err(fail(0, Phase::Setup))?,
                ))
            }
            RunMode::Coupled | RunMode::MechanicsOnly | RunMode::Fallback => {
                Some(Mechanics::Coupled(
                    CoupledSolver::new(
                        mesh.clone(),
                        config.mechanics,
                        PoroBoundary::default(),
                        config.interface,
                        dt_mech,
                        config.poro.mode,
                    )
                    .map_err(fail(0, Phase::Setup))?,
                ))
            }
            RunMode::BiologyOnly => None,
        };
        let coupler = Coupler::new(config.stimulus, plan.mech_cadence, mesh.n_elements())
            .map_err(|e| fail(0, Phase::Setup)(e.within("stimulus")))?;
        let cell_state = match &cells {
            Some(p) => Some(
                initial_cells(&config, p)
                    .map_err(|e| fail(0, Phase::Setup)(e.within("initial")))?,
            ),
            None => None,
        };
        let mech_state = mech.as_ref().map(|m| match m {
            Mechanics::Poro(s) => MechState::Poro(s.operator().zero_state()),
            Mechanics::Coupled(s) => MechState::Coupled(s.zero_state()),
        });
        let initial = cells
            .as_ref()
            .zip(cell_state.as_ref())
            .map(|(p, s)| p.record(0, s, 0));
        let stats = RunStats {
            initial,
            newton_total: 0,
            newton_max: 0,
            min_c1: initial.map_or(f64::INFINITY, |r| r.min_c1),
            min_c2: initial.map_or(f64::INFINITY, |r| r.min_c2),
        };
        let porous = (0..mesh.n_elements())
            .filter(|&e| mesh.subdomains[e] == Subdomain::Porous)
            .collect();
        Ok(Simulation {
            config_hash: config.hash(),
            mesh_hash: mesh.fingerprint(),
            config,
            plan,
            mesh,
            cells,
            mech,
            porous,
            state: SimState {
                step: 0,
                cells: cell_state,
                mech: mech_state,
                coupler,
                stats,
            },
        })
    }

    /// Rebuilds the simulation and replaces its state with a checkpoint
    /// written for the same configuration and mesh.
    pub fn restore(config: Config, mesh: Arc<Mesh>, path: &Path) -> Result<Self, RunError> {
        let mut sim = Simulation::new(config, mesh)?;
        let c: Checkpoint<SimState> = Checkpoint::load(path, &sim.config_hash, &sim.mesh_hash)
            .map_err(fail(0, Phase::Checkpoint))?;
        if c.step != c.payload.step {
            return Err(fail(0, Phase::Checkpoint)(CheckpointError::Format(
                "step does not match payload".into(),
            )));
        }
        sim.state = c.payload;
        Ok(sim)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn plan(&self) -> &RunPlan {
        &self.plan
    }

    pub fn plan_mut(&mut self) -> &mut RunPlan {
        &mut self.plan
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn cell_problem(&self) -> Option<&CellProblem> {
        self.cells.as_ref()
    }

    pub fn biot(&self) -> Option<&BiotOperator> {
        self.mech.as_ref().map(Mechanics::biot)
    }

    pub fn coupled_solver(&self) -> Option<&CoupledSolver> {
        match &self.mech {
            Some(Mechanics::Coupled(s)) => Some(s),
            _ => None,
        }
    }

    pub fn checkpoint(&self, path: &Path) -> Result<(), RunError> {
        Checkpoint::new(
            &self.config_hash,
            &self.mesh_hash,
            self.state.step,
            self.state.clone(),
        )
        .save(path)
        .map_err(fail(self.state.step, Phase::Checkpoint))
    }

    fn occupancy(&self) -> f64 {
        self.state.coupler.stimulus().map_or(0.0, |s| {
            s.occupancy(&self.config.stimulus.window(), self.porous.iter().copied())
        })
    }

    /// Advances one step; returns the biology record and, if mechanics ran,
    /// the mechanics row.
    pub fn advance(&mut self) -> Result<(Option<StepRecord>, Option<Vec<f64>>), RunError> {
        let step = self.state.step + 1;
        let mut mech_row = None;
        if let (Some(mech), true) = (&self.mech, self.plan.mechanics_due(step)) {
            let old = self.state.mech.take().expect("mechanics state");
            let (new, extra) = match (mech, &old) {
                (Mechanics::Poro(solver), MechState::Poro(s)) => {
                    let dt = solver.operator().dt();
                    let p = self.config.mechanics.inflow_pressure(s.t + dt);
                    let new = solver
                        .step(s, &PoroLoads::pressurised(BoundaryTag::Inflow, p), dt)
                        .map_err(fail(step, Phase::Mechanics))?;
                    (MechState::Poro(new), vec![])
                }
                (Mechanics::Coupled(solver), MechState::Coupled(s)) => {
                    let new = solver
                        .step(s, &PoroLoads::none())
                        .map_err(fail(step, Phase::Mechanics))?;
                    let d = solver.diagnostics(&new, s);
                    let speed = sample_vector(
                        solver.stokes().velocity_space(),
                        &new.fluid.u,
                        Layout::Vertices,
                    )
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0, f64::max);
                    let energy = solver.energy(&new);
                    (MechState::Coupled(new), vec![speed, d.mismatch, energy])
                }
                _ => unreachable!("state kind follows the solver kind"),
            };
            let biot = mech.biot();
            let field = compute_stimulus(biot, new.wall(), &self.config.stimulus);
            self.state
                .coupler
                .update(field)
                .map_err(fail(step, Phase::Stimulus))?;
            let mut row = mech_summary(biot, new.wall(), &self.config);
            row.push(
                self.state
                    .coupler
                    .stimulus()
                    .map_or(0.0, |s| s.s.iter().copied().fold(0.0, f64::max)),
            );
            row.push(self.occupancy());
            row.extend(extra);
            self.state.mech = Some(new);
            mech_row = Some(row);
        } else if self.mech.is_none() && self.state.coupler.stimulus().is_none() {
            self.state
                .coupler
                .update(StimulusField::zeros(self.mesh.n_elements()))
                .map_err(fail(step, Phase::Stimulus))?;
        }
        let mut record = None;
        if let Some(problem) = &self.cells {
            let rates = self
                .state
                .coupler
                .rates(step)
                .map_err(fail(step, Phase::Stimulus))?;
            let old = self.state.cells.as_ref().expect("cell state");
            let (new, report) = problem
                .step(old, &rates, self.plan.dt)
                .map_err(fail(step, Phase::Biology))?;
            let rec = problem.record(step, &new, report.iterations);
            let st = &mut self.state.stats;
            st.newton_total += report.iterations;
            st.newton_max = st.newton_max.max(report.iterations);
            st.min_c1 = st.min_c1.min(rec.min_c1);
            st.min_c2 = st.min_c2.min(rec.min_c2);
            self.state.cells = Some(new);
            record = Some(rec);
        }
        self.state.step = step;
        Ok((record, mech_row))
    }

    fn mech_header(&self) -> Option<Vec<&'static str>> {
        let mut h = vec![
            "step",
            "t",
            "max_displacement",
            "max_pore_pressure",
            "max_von_mises",
            "max_seepage",
            "max_stimulus",
            "window_occupancy",
        ];
        match self.mech.as_ref()? {
            Mechanics::Poro(_) => {}
            Mechanics::Coupled(_) => h.extend(["max_fluid_speed", "interface_mismatch", "energy"]),
        }
        Some(h)
    }

    /// Runs to `plan.n_steps`, writing into `plan.out_dir`. A restored
    /// simulation drops CSV rows past its checkpoint and appends.
    pub fn run(&mut self) -> Result<RunReport, RunError> {
        let start = Instant::now();
        let dir = self.plan.out_dir.clone();
        let from = self.state.step;
        let out = |e| fail(from, Phase::Output)(e);
        fs::create_dir_all(&dir).map_err(|source| {
            out(RunFailure::Io {
                path: dir.clone(),
                source,
            })
        })?;
        let mode = if from == 0 {
            OpenMode::Create
        } else {
            OpenMode::Append
        };
        let mut cells_csv = match &self.cells {
            Some(_) => {
                let path = dir.join(CELLS_CSV);
                if from > 0 {
                    truncate_series(&path, from).map_err(out)?;
                }
                let mut header = vec!["step"];
                header.extend(StepRecord::HEADER);
                header.push("window_occupancy");
                Some(SeriesWriter::open(&path, &header, mode).map_err(|e| out(e.into()))?)
            }
            None => None,
        };
        let mut mech_csv = match self.mech_header() {
            Some(header) => {
                let path = dir.join(MECHANICS_CSV);
                if from > 0 {
                    truncate_series(&path, from).map_err(out)?;
                }
                Some(SeriesWriter::open(&path, &header, mode).map_err(|e| out(e.into()))?)
            }
            None => None,
        };
        if from == 0 && self.plan.vtk {
            self.write_snapshots(&dir).map_err(out)?;
        }
        while self.state.step < self.plan.n_steps {
            let result = self.advance();
            let (record, mech_row) = match result {
                Ok(r) => r,
                Err(e) => {
                    // keep what was written so far
                    if let Some(w) = cells_csv.as_mut() {
                        let _ = w.flush();
                    }
                    if let Some(w) = mech_csv.as_mut() {
                        let _ = w.flush();
                    }
                    return Err(e);
                }
            };
            let step = self.state.step;
            let out = |e| fail(step, Phase::Output)(e);
            if let (Some(w), Some(rec)) = (cells_csv.as_mut(), record) {
                let mut row = vec![step.to_string()];
                row.extend(rec.fields());
                row.push(format!("{:?}", self.occupancy()));
                w.write_row(&row).map_err(|e| out(e.into()))?;
            }
            if let (Some(w), Some(vals)) = (mech_csv.as_mut(), mech_row) {
                let t = self.state.mech.as_ref().map_or(0.0, |m| m.wall().t);
                let mut row = vec![step.to_string(), format!("{t:?}")];
                row.extend(vals.iter().map(|v| format!("{v:?}")));
                w.write_row(&row).map_err(|e| out(e.into()))?;
            }
            let last = step == self.plan.n_steps;
            if self.plan.vtk && (step % self.plan.output_stride == 0 || last) {
                self.write_snapshots(&dir).map_err(out)?;
            }
            if let Some(stride) = self.plan.checkpoint_stride {
                if step % stride == 0 || last {
                    for w in cells_csv.iter_mut().chain(mech_csv.iter_mut()) {
                        w.flush().map_err(|e| out(e.into()))?;
                    }
                    self.checkpoint(&dir.join(checkpoint_name(step)))?;
                }
            }
        }
        for w in cells_csv.iter_mut().chain(mech_csv.iter_mut()) {
            w.flush()
                .map_err(|e| fail::<SeriesError>(self.state.step, Phase::Output)(e))?;
        }
        let report = self.report(start.elapsed().as_secs_f64());
        let out = |e| fail(self.state.step, Phase::Output)(e);
        let io = |path: PathBuf| move |source| RunFailure::Io { path, source };
        let summary = dir.join(SUMMARY_CSV);
        let mut w = SeriesWriter::open(&summary, &["key", "value"], OpenMode::Create)
            .map_err(|e| out(e.into()))?;
        for (k, v) in report.summary() {
            w.write_row(&[k.to_string(), v])
                .map_err(|e| out(e.into()))?;
        }
        w.flush().map_err(|e| out(e.into()))?;
        let txt = dir.join(REPORT_TXT);
        fs::write(&txt, report.to_text()).map_err(|e| out(io(txt.clone())(e)))?;
        Ok(report)
    }

    pub fn report(&self, wall_time_s: f64) -> RunReport {
        let st = &self.state.stats;
        let (final_integrals, drift) = match (&self.cells, &self.state.cells, &st.initial) {
            (Some(p), Some(s), Some(init)) => {
                let i = p.integrals(s);
                let m0 = init.int_c1 + init.int_c2;
                (
                    i,
                    ((i[0] + i[1]) - m0).abs() / m0.abs().max(f64::MIN_POSITIVE),
                )
            }
            _ => ([0.0; 4], 0.0),
        };
        let steps = self.state.step;
        RunReport {
            mode: self.plan.mode,
            steps,
            final_t: self
                .state
                .cells
                .as_ref()
                .map(|c| c.t)
                .or(self.state.mech.as_ref().map(|m| m.wall().t))
                .unwrap_or(0.0),
            wall_time_s,
            newton_total: st.newton_total,
            newton_mean: if steps == 0 {
                0.0
            } else {
                st.newton_total as f64 / steps as f64
            },
            newton_max: st.newton_max,
            conservation_drift: drift,
            min_c1: st.min_c1,
            min_c2: st.min_c2,
            final_integrals,
            window_occupancy: self.occupancy(),
        }
    }

    fn write_snapshots(&self, dir: &Path) -> Result<(), RunFailure> {
        let step = self.state.step;
        let stimulus = self
            .state
            .coupler
            .stimulus()
            .map_or_else(|| vec![0.0; self.mesh.n_elements()], |s| s.s.clone());
        if let (Some(p), Some(s)) = (&self.cells, &self.state.cells) {
            let (dg, p1) = (p.dg_space(), p.p1_space());
            let window = self.config.stimulus.window();
            let alpha2 = self.config.stimulus.alpha2_map();
            let mut fields = vec![
                VtkField::point_scalar("c1", sample(dg, &s.c1, 0, Layout::Cloud)),
                VtkField::point_scalar("c2", sample(dg, &s.c2, 0, Layout::Cloud)),
                VtkField::point_scalar("h", sample(p1, &s.h, 0, Layout::Cloud)),
                VtkField::point_scalar("k", sample(p1, &s.k, 0, Layout::Cloud)),
                VtkField::cell_scalar("S", stimulus.clone()),
            ];
            if self.config.stimulus.mode == crate::stimulus::RateMode::StressMapped {
                fields.push(VtkField::cell_scalar(
                    "alpha1",
                    stimulus.iter().map(|&x| window.eval(x)).collect(),
                ));
                fields.push(VtkField::cell_scalar(
                    "alpha2",
                    stimulus.iter().map(|&x| alpha2.eval(x)).collect(),
                ));
            }
            write_vtk(
                &dir.join(format!("cells_{step:05}.vtk")),
                &self.mesh,
                Layout::Cloud,
                &fields,
                &format!("cells step {step} t {:?}", s.t),
            )?;
        }
        if let (Some(m), Some(s)) = (&self.mech, &self.state.mech) {
            let biot = m.biot();
            let wall = s.wall();
            let stress = compute_stress(biot, wall);
            let mut fields = vec![
                VtkField::point_vector(
                    "eta_p",
                    &sample_vector(biot.displacement_space(), &wall.eta, Layout::Vertices),
                ),
                VtkField::cell_scalar(
                    "p_p",
                    sample(biot.pressure_space(), &wall.p, 0, Layout::Vertices),
                ),
                VtkField::cell_vector("u_p", &biot.darcy_velocity(wall)),
                VtkField::cell_scalar("von_mises", stress.von_mises.clone()),
                VtkField::cell_scalar("octahedral_shear", stress.octahedral_shear.clone()),
                VtkField::cell_scalar("S", stimulus),
            ];
            if let (Mechanics::Coupled(solver), MechState::Coupled(c)) = (m, s) {
                let st = solver.stokes();
                fields.push(VtkField::point_vector(
                    "u_f",
                    &sample_vector(st.velocity_space(), &c.fluid.u, Layout::Vertices),
                ));
                fields.push(VtkField::point_scalar(
                    "p_f",
                    sample(st.pressure_space(), &c.fluid.p, 0, Layout::Vertices),
                ));
            }
            write_vtk(
                &dir.join(format!("mech_{step:05}.vtk")),
                &self.mesh,
                Layout::Vertices,
                &fields,
                &format!("mechanics step {step} t {:?}", wall.t),
            )?;
        }
        Ok(())
    }
}

fn initial_cells(config: &Config, problem: &CellProblem) -> Result<CellState, ValidationError> {
    let ic = config.initial.compile()?;
    let err = RefCell::new(None);
    let state = problem.interpolate_state(
        |x| {
            ic.eval(x).unwrap_or_else(|e| {
                err.borrow_mut().get_or_insert(e);
                [f64::NAN; 4]
            })
        },
        0.0,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(state),
    }
}

/// `[max |η|, max p, max von Mises, max |u_p/Φ|]` over the porous region.
fn mech_summary(op: &BiotOperator, s: &PoroState, config: &Config) -> Vec<f64> {
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let eta = sample_vector(op.displacement_space(), &s.eta, Layout::Vertices);
    let stress = compute_stress(op, s);
    let phi = config.mechanics.phi;
    vec![
        max(&mut eta.iter().map(Point::norm)),
        max(&mut s.p.iter().copied()),
        max(&mut stress.von_mises.iter().copied()),
        max(&mut op.darcy_velocity(s).iter().map(|v| v.norm() / phi)),
    ]
}

/// Drops rows whose `step` column exceeds `step`.
fn truncate_series(path: &Path, step: usize) -> Result<(), RunFailure> {
    if !path.exists() {
        return Ok(());
    }
    let (header, rows) = read_series(path)?;
    let mut w = SeriesWriter::open(path, &header, OpenMode::Create)?;
    for row in rows {
        let s: usize = row
            .first()
            .and_then(|v| v.parse().ok())
            .unwrap_or(usize::MAX);
        if s <= step {
            w.write_row(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Builds the mesh from the configuration and runs it.
pub fn run(config: Config, base: Option<&Path>) -> Result<(Simulation, RunReport), RunError> {
    let mesh = config.build_mesh(base).map_err(fail(0, Phase::Setup))?;
    let mut sim = Simulation::new(config, mesh)?;
    let report = sim.run()?;
    Ok((sim, report))
}
