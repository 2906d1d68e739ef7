//! Simulation engine for scaffold-based meniscus cartilage regeneration:
//! a discontinuous Galerkin taxis-reaction model for stem cells and
//! chondrocytes driven by poroelastic (Biot-Darcy) and free-fluid (Stokes)
//! mechanics through a mechanical-stimulus-to-rate mapping.

pub mod cells;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod orchestrator;
pub mod poro;
pub mod sparse;
pub mod stimulus;
pub mod stokes;
pub mod validate;
pub mod verification;
