//! TOML run configuration.
//!
//! Every section and key is optional and falls back to its default; unknown
//! keys are rejected. Units are mm, s, MPa, except the densities (kg/m³) and
//! `kappa`/`mu_f`, which enter only through the mobility `kappa / mu_f`
//! (taken as mm²/(MPa·s)).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::initial::InitialConditions;
use crate::cells::{BiologyParams, NewtonConfig};
use crate::mesh::{
    read_msh, structured_generator, uniform_refine, BoundaryTag, GeometrySpec, Mesh, MeshError,
    MshError, Subdomain,
};
use crate::orchestrator::RunPlan;
use crate::poro::{MechParams, PoroMode};
use crate::stimulus::StimulusParams;
use crate::stokes::InterfaceParams;
use crate::validate::{self, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// unit square, all walls fixed and drained
    #[default]
    UnitSquarePorous,
    /// unit square with a pressurised, free top edge (`Inflow`)
    PorousWithInflow,
    /// fluid channel over a porous block
    ChannelOverPorous,
    /// three disconnected unit squares at x = 0, 2, 4; only the first has an `Inflow` top
    ThreeSquares,
    /// Gmsh 2.2 ASCII file given by `file`
    Gmsh,
}

impl std::str::FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "unit-square-porous" => Geometry::UnitSquarePorous,
            "porous-with-inflow" => Geometry::PorousWithInflow,
            "channel-over-porous" => Geometry::ChannelOverPorous,
            "three-squares" => Geometry::ThreeSquares,
            "gmsh" => Geometry::Gmsh,
            other => {
                return Err(format!(
                    "unknown geometry `{other}` (expected unit-square-porous, porous-with-inflow, channel-over-porous, three-squares or gmsh)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub geometry: Geometry,
    pub nx: usize,
    pub ny: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// uniform refinements applied after generation
    pub refine: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            geometry: Geometry::UnitSquarePorous,
            nx: 16,
            ny: 16,
            file: None,
            refine: 0,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::at_least_one("nx", self.nx)?;
        validate::at_least_one("ny", self.ny)?;
        if self.geometry == Geometry::Gmsh && self.file.is_none() {
            return Err(ValidationError::new(
                "file",
                "(missing)",
                "required for geometry = \"gmsh\"",
            ));
        }
        if self.geometry == Geometry::ChannelOverPorous && self.ny < 2 {
            return Err(ValidationError::new(
                "ny",
                self.ny,
                ">= 2 for channel-over-porous",
            ));
        }
        Ok(())
    }

    /// Builds the mesh; a relative `file` is resolved against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Mesh, ConfigError> {
        let (nx, ny) = (self.nx, self.ny);
        let mut mesh = match self.geometry {
            Geometry::UnitSquarePorous => {
                structured_generator(nx, ny, &GeometrySpec::UnitSquarePorous)?
            }
            Geometry::PorousWithInflow => {
                structured_generator(nx, ny, &square([0.0, 0.0], BoundaryTag::Inflow))?
            }
            Geometry::ChannelOverPorous => {
                structured_generator(nx, ny, &GeometrySpec::channel_default(0))?
            }
            Geometry::ThreeSquares => {
                let parts = [
                    structured_generator(nx, ny, &square([0.0, 0.0], BoundaryTag::Inflow))?,
                    structured_generator(nx, ny, &square([2.0, 0.0], BoundaryTag::PorousWall))?,
                    structured_generator(nx, ny, &square([4.0, 0.0], BoundaryTag::PorousWall))?,
                ];
                Mesh::disjoint_union(&parts)?
            }
            Geometry::Gmsh => {
                let file = self.file.as_ref().expect("validated");
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                read_msh(&text)?
            }
        };
        for _ in 0..self.refine {
            mesh = uniform_refine(&mesh);
        }
        Ok(mesh)
    }
}

fn square(origin: [f64; 2], top: BoundaryTag) -> GeometrySpec {
    GeometrySpec::Rectangle {
        origin,
        width: 1.0,
        height: 1.0,
        subdomain: Subdomain::Porous,
        left: BoundaryTag::PorousWall,
        right: BoundaryTag::PorousWall,
        bottom: BoundaryTag::PorousWall,
        top,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PoroConfig {
    pub mode: PoroMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub mesh: MeshConfig,
    pub biology: BiologyParams,
    pub mechanics: MechParams,
    pub poro: PoroConfig,
    pub stimulus: StimulusParams,
    pub interface: InterfaceParams,
    pub run: RunPlan,
    pub initial: InitialConditions,
    pub newton: NewtonConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Msh(#[from] MshError),
    #[error("cannot serialise configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl ConfigError {
    pub fn is_validation(&self) -> bool {
        matches!(self, ConfigError::Parse { .. } | ConfigError::Invalid(_))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.mesh.validate().map_err(|e| e.within("mesh"))?;
        self.biology.validate().map_err(|e| e.within("biology"))?;
        self.mechanics
            .validate()
            .map_err(|e| e.within("mechanics"))?;
        self.stimulus.validate().map_err(|e| e.within("stimulus"))?;
        self.interface
            .validate()
            .map_err(|e| e.within("interface"))?;
        self.run.validate().map_err(|e| e.within("run"))?;
        self.initial.compile().map_err(|e| e.within("initial"))?;
        self.newton.validate().map_err(|e| e.within("newton"))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = self.to_toml()?;
        fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// SHA-256 of the settings that determine the trajectory; run length,
    /// output and checkpoint settings are excluded so that a run can be
    /// extended from a checkpoint.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        let d = RunPlan::default();
        c.run.n_steps = d.n_steps;
        c.run.output_stride = d.output_stride;
        c.run.checkpoint_stride = None;
        c.run.out_dir = d.out_dir;
        c.run.vtk = d.vtk;
        let text = toml::to_string(&c).expect("configuration serialises");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn build_mesh(&self, base: Option<&Path>) -> Result<Arc<Mesh>, ConfigError> {
        Ok(Arc::new(self.mesh.build(base)?))
    }
}
