//! Configuration, initial conditions, field and series output, checkpoints.

pub mod checkpoint;
pub mod config;
pub mod initial;
pub mod series;
pub mod vtk;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{Config, ConfigError, Geometry, MeshConfig, PoroConfig};
pub use initial::{CompiledInitial, InitialConditions};
pub use series::{read_series, OpenMode, SeriesError, SeriesWriter};
pub use vtk::{parse_vtk, render_vtk, write_vtk, Layout, VtkError, VtkField};
