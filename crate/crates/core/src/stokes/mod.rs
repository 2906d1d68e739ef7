//! Unsteady Stokes flow in the fluid region (P1-bubble velocity, P1 pressure)
//! and its Nitsche coupling to the Biot wall.
//!
//! ```text
//! ρ_f(u − u_old, v)/dt + 2μ_f(D u, D v) − (p, ∇·v) = boundary terms
//! (q, ∇·u) = 0
//! ```

mod coupled;
mod operator;

use serde::{Deserialize, Serialize};

pub use coupled::{CoupledSolver, CoupledState, InterfaceDiagnostics, InterfaceParams};
pub use operator::{StokesOperator, StokesSolver};

use crate::fem::FemError;
use crate::mesh::BoundaryTag;
use crate::poro::PoroError;
use crate::sparse::{AssemblyError, SolveError};
use crate::validate::ValidationError;

/// Scale of the penalty `c μ/h ∫ (u·t)(v·t)` that removes tangential velocity.
pub const TANGENTIAL_PENALTY: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InflowBc {
    /// traction `−p_in(t) n`, tangential velocity penalised
    #[default]
    Traction,
    /// parabolic profile with the given peak speed, directed into the domain
    Parabolic { peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutflowBc {
    /// `σ n = 0`
    #[default]
    Natural,
    /// zero normal traction, tangential velocity penalised
    NoTangential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceBc {
    /// handled by the coupled solver
    #[default]
    Coupled,
    /// no-slip wall (Stokes on its own)
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StokesOptions {
    pub inflow: InflowBc,
    pub outflow: OutflowBc,
    pub interface: InterfaceBc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesState {
    /// velocity, blocked by component (vertex dofs then bubbles per component)
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum StokesError {
    #[error("the fluid region has no elements")]
    EmptyRegion,
    #[error("mesh has no faces tagged {0}")]
    MissingTag(BoundaryTag),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Poro(#[from] PoroError),
}
