//! Taxis–reaction model for stem cells (c1), chondrocytes (c2), hyaluron (h)
//! and cartilage (k) on the porous region.
//!
//! c1, c2 are broken P1 fields discretised with the non-symmetric interior
//! penalty method and upwinded taxis; h, k are nodal ODEs on continuous P1
//! with lumped mass, driven by the lumped L² projection of c1, c2. Implicit
//! Euler in time, Newton with an analytic Jacobian.

mod balance;
mod problem;

use serde::{Deserialize, Serialize};

pub use balance::{element_balance, ElementBalance};
pub use problem::{CellProblem, NewtonReport, SourceFn};

use crate::fem::FemError;
use crate::sparse::{AssemblyError, LinearSolverConfig, SolveError};
use crate::validate::{self, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiologyParams {
    /// stem-cell diffusivity
    pub a1: f64,
    /// hyaluron taxis coefficient
    pub b1: f64,
    /// cartilage taxis coefficient
    pub b2: f64,
    /// proliferation rate
    pub beta: f64,
    /// hyaluron uptake
    pub gamma1: f64,
    /// cartilage degradation by stem cells
    pub delta1: f64,
    /// interior penalty scale
    pub eta0: f64,
}

impl Default for BiologyParams {
    fn default() -> Self {
        BiologyParams {
            a1: 0.015,
            b1: 0.005,
            b2: 0.001,
            beta: 0.5,
            gamma1: 0.01,
            delta1: 0.01,
            eta0: 4.0,
        }
    }
}

impl BiologyParams {
    /// All constants must be positive; `beta`, `b1`, `b2`, `gamma1` and
    /// `delta1` may also be zero so that sub-models can be switched off.
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::positive("a1", self.a1)?;
        validate::positive("eta0", self.eta0)?;
        validate::non_negative("b1", self.b1)?;
        validate::non_negative("b2", self.b2)?;
        validate::non_negative("beta", self.beta)?;
        validate::non_negative("gamma1", self.gamma1)?;
        validate::non_negative("delta1", self.delta1)?;
        Ok(())
    }

    /// Largest diffusivity of the two cell equations (c2 has unit diffusivity).
    pub fn a_max(&self) -> f64 {
        self.a1.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Stop when `‖R‖ ≤ tolerance · max(1, ‖R₀‖)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linear: LinearSolverConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tolerance: 1e-10,
            max_iterations: 25,
            linear: LinearSolverConfig::direct(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::positive("tolerance", self.tolerance)?;
        validate::at_least_one("max_iterations", self.max_iterations)?;
        self.linear
            .validate()
            .map_err(|m| ValidationError::new("linear", "", m))
    }
}

/// Coefficients at one time level: c1, c2 per broken-P1 dof, h, k per P1 dof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    pub t: f64,
}

impl CellState {
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.c1.len() + 2 * self.h.len());
        x.extend_from_slice(&self.c1);
        x.extend_from_slice(&self.c2);
        x.extend_from_slice(&self.h);
        x.extend_from_slice(&self.k);
        x
    }

    pub fn unpack(x: &[f64], n_dg: usize, n_p1: usize, t: f64) -> Self {
        let (c1, rest) = x.split_at(n_dg);
        let (c2, rest) = rest.split_at(n_dg);
        let (h, k) = rest.split_at(n_p1);
        CellState {
            c1: c1.to_vec(),
            c2: c2.to_vec(),
            h: h.to_vec(),
            k: k.to_vec(),
            t,
        }
    }
}

/// Elementwise-constant differentiation rates, indexed by mesh element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateField {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
}

impl RateField {
    pub fn constant(n_elements: usize, alpha1: f64, alpha2: f64) -> Self {
        RateField {
            alpha1: vec![alpha1; n_elements],
            alpha2: vec![alpha2; n_elements],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("Newton did not converge in {iterations} iterations; residual history {history:?}")]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("invalid parameter: {0}")]
    Invalid(#[from] ValidationError),
    #[error("the porous region has no elements")]
    EmptyRegion,
    #[error("observer failed: {0}")]
    Observer(String),
    #[error("rate provider failed: {0}")]
    Rates(String),
}

/// One CSV row per time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub int_c1: f64,
    pub int_c2: f64,
    pub int_h: f64,
    pub int_k: f64,
    pub min_c1: f64,
    pub min_c2: f64,
    pub newton_iterations: usize,
}

impl StepRecord {
    pub const HEADER: [&'static str; 8] = [
        "t",
        "int_c1",
        "int_c2",
        "int_h",
        "int_k",
        "min_c1",
        "min_c2",
        "newton_iterations",
    ];

    pub fn fields(&self) -> Vec<String> {
        vec![
            format!("{:?}", self.t),
            format!("{:?}", self.int_c1),
            format!("{:?}", self.int_c2),
            format!("{:?}", self.int_h),
            format!("{:?}", self.int_k),
            format!("{:?}", self.min_c1),
            format!("{:?}", self.min_c2),
            self.newton_iterations.to_string(),
        ]
    }
}

pub trait CellObserver {
    /// Called after every step; `snapshot` is set on output-stride steps.
    fn on_step(
        &mut self,
        record: &StepRecord,
        state: &CellState,
        snapshot: bool,
    ) -> Result<(), CellError>;
}

impl<F: FnMut(&StepRecord, &CellState, bool) -> Result<(), CellError>> CellObserver for F {
    fn on_step(
        &mut self,
        record: &StepRecord,
        state: &CellState,
        snapshot: bool,
    ) -> Result<(), CellError> {
        self(record, state, snapshot)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub final_state: CellState,
    pub initial: StepRecord,
    pub records: Vec<StepRecord>,
    pub newton_total: usize,
    pub newton_max: usize,
}

impl RunSummary {
    /// Relative drift of ∫(c1 + c2) over the run.
    pub fn conservation_drift(&self) -> f64 {
        let last = self.records.last().unwrap_or(&self.initial);
        let m0 = self.initial.int_c1 + self.initial.int_c2;
        let m1 = last.int_c1 + last.int_c2;
        (m1 - m0).abs() / m0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Advances `initial` by `n_steps` implicit Euler steps. `rates` is queried
/// before each step with the step index and the current state.
pub fn run_cells(
    problem: &CellProblem,
    initial: CellState,
    rates: &mut dyn FnMut(usize, &CellState) -> Result<RateField, CellError>,
    dt: f64,
    n_steps: usize,
    stride: usize,
    observer: &mut dyn CellObserver,
) -> Result<RunSummary, CellError> {
    validate::at_least_one("n_steps", n_steps)?;
    validate::at_least_one("output_stride", stride)?;
    validate::positive("dt", dt)?;
    let initial_record = problem.record(0, &initial, 0);
    let mut state = initial;
    let mut records = Vec::with_capacity(n_steps);
    let (mut total, mut max) = (0, 0);
    for step in 1..=n_steps {
        let r = rates(step, &state)?;
        let (next, report) = problem.step(&state, &r, dt)?;
        total += report.iterations;
        max = max.max(report.iterations);
        let rec = problem.record(step, &next, report.iterations);
        observer.on_step(&rec, &next, step % stride == 0 || step == n_steps)?;
        records.push(rec);
        state = next;
    }
    Ok(RunSummary {
        steps: n_steps,
        final_state: state,
        initial: initial_record,
        records,
        newton_total: total,
        newton_max: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let p = BiologyParams::default();
        assert_eq!(
            (p.a1, p.b1, p.b2, p.beta, p.gamma1, p.delta1),
            (0.015, 0.005, 0.001, 0.5, 0.01, 0.01)
        );
        assert!(p.validate().is_ok());
        let bad = BiologyParams { a1: -1.0, ..p };
        assert_eq!(bad.validate().unwrap_err().key, "a1");
    }

    #[test]
    fn pack_roundtrip() {
        let s = CellState {
            c1: vec![1.0, 2.0, 3.0],
            c2: vec![4.0, 5.0, 6.0],
            h: vec![7.0],
            k: vec![8.0],
            t: 0.5,
        };
        assert_eq!(CellState::unpack(&s.pack(), 3, 1, 0.5), s);
    }
}
