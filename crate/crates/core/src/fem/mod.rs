//! Reference elements, quadrature and the discrete spaces: continuous P1,
//! broken P1, P1-bubble (mini element velocity), RT0 and P0.

mod forms;
mod quadrature;
mod space;

pub use forms::{
    assemble_bilinear, assemble_triplets, dg_faces, elastic_pair, upwind_weights, FaceContext,
    Form, Penalty,
};
pub use quadrature::{LineRule, QuadratureRule};
pub use space::{
    barycentric, interpolate, interpolate_scalar, rt0_basis, scalar_basis, Evaluation, FieldVector,
    FunctionSpace, ScalarBasis, SpaceKind,
};

use crate::sparse::AssemblyError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FemError {
    #[error("element {element} out of range ({n_elements} elements)")]
    ElementOutOfRange { element: usize, n_elements: usize },
    #[error("element {0} is outside the space's region")]
    InactiveElement(usize),
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    Length { expected: usize, got: usize },
    #[error("incompatible spaces: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}
