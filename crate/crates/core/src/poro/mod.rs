//! Biot poroelasticity with a mixed Darcy flux: vector P1 displacement,
//! RT0 flux and P0 pore pressure, backward Euler on the storage equation,
//! optional Newmark inertia.
//!
//! Units: mm, s, MPa, tonnes. Densities are configured in kg/m³ and scaled
//! by [`KG_PER_M3_TO_T_PER_MM3`] on use.

mod biot;
mod stress;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub(crate) use biot::region_faces;
pub use biot::{mass_balance, BiotOperator, PoroSolver, RegionFace};
pub use stress::{compute_stress, octahedral_shear_strain, StressField, Tensor2};

use crate::fem::FemError;
use crate::mesh::BoundaryTag;
use crate::sparse::{AssemblyError, SolveError};
use crate::validate::{self, ValidationError};

pub const KG_PER_M3_TO_T_PER_MM3: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechParams {
    /// peak inflow pressure, MPa
    pub p_max: f64,
    /// fluid dynamic viscosity, MPa·s
    pub mu_f: f64,
    /// poroelastic wall density, kg/m³
    pub rho_p: f64,
    /// permeability, m⁴/(N·s)
    pub kappa: f64,
    /// fluid density, kg/m³
    pub rho_f: f64,
    /// initial porosity
    #[serde(rename = "Phi")]
    pub phi: f64,
    /// Young's modulus, MPa
    #[serde(rename = "E")]
    pub young: f64,
    /// mass storativity 1/M, 1/MPa
    #[serde(rename = "inv_M")]
    pub inv_m: f64,
    pub nu: f64,
    /// Biot–Willis constant
    #[serde(rename = "alpha")]
    pub alpha_biot: f64,
    /// mm/s²
    pub gravity: [f64; 2],
}

impl Default for MechParams {
    fn default() -> Self {
        MechParams {
            p_max: 10.0,
            mu_f: 1e-9,
            rho_p: 1.1e3,
            kappa: 1e-14,
            rho_f: 1e3,
            phi: 0.8,
            young: 80.0,
            inv_m: 68.9,
            nu: 0.167,
            alpha_biot: 1.0,
            gravity: [0.0, 0.0],
        }
    }
}

impl MechParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::positive("E", self.young)?;
        validate::open("nu", self.nu, 0.0, 0.5).or_else(|e| {
            if self.nu == 0.0 {
                Ok(())
            } else {
                Err(e)
            }
        })?;
        validate::open("Phi", self.phi, 0.0, 1.0)?;
        validate::positive("kappa", self.kappa)?;
        validate::positive("mu_f", self.mu_f)?;
        validate::left_open("alpha", self.alpha_biot, 0.0, 1.0)?;
        validate::non_negative("inv_M", self.inv_m)?;
        validate::non_negative("rho_p", self.rho_p)?;
        validate::non_negative("rho_f", self.rho_f)?;
        validate::non_negative("p_max", self.p_max)?;
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(ValidationError::new(
                "gravity",
                format!("{:?}", self.gravity),
                "finite",
            ));
        }
        Ok(())
    }

    /// Darcy mobility `K = κ/μ_f`, used directly in mm²/(MPa·s).
    pub fn mobility(&self) -> f64 {
        self.kappa / self.mu_f
    }

    pub fn solid_density(&self) -> f64 {
        self.rho_p * KG_PER_M3_TO_T_PER_MM3
    }

    pub fn fluid_density(&self) -> f64 {
        self.rho_f * KG_PER_M3_TO_T_PER_MM3
    }

    /// Inflow pressure `p_max sin(πt)`.
    pub fn inflow_pressure(&self, t: f64) -> f64 {
        self.p_max * (std::f64::consts::PI * t).sin()
    }
}

/// Lamé parameters `(λ, μ)` from Young's modulus and Poisson's ratio.
pub fn lame_from_table(p: &MechParams) -> Result<(f64, f64), ValidationError> {
    validate::positive("E", p.young)?;
    if !(p.nu >= 0.0 && p.nu < 0.5) {
        return Err(ValidationError::new("nu", p.nu, "in [0, 0.5)"));
    }
    let (e, nu) = (p.young, p.nu);
    Ok((
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        e / (2.0 * (1.0 + nu)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoroMode {
    #[default]
    QuasiStatic,
    /// Newmark β = 1/4, γ = 1/2 on the solid inertia
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplacementBc {
    Fixed,
    FixedX,
    FixedY,
    Free,
}

impl DisplacementBc {
    pub fn fixed_components(self) -> [bool; 2] {
        match self {
            DisplacementBc::Fixed => [true, true],
            DisplacementBc::FixedX => [true, false],
            DisplacementBc::FixedY => [false, true],
            DisplacementBc::Free => [false, false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowBc {
    /// pore pressure prescribed (zero unless loaded), natural in the mixed form
    Drained,
    /// `u·n = 0`, essential on RT0 dofs
    NoFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagCondition {
    pub displacement: DisplacementBc,
    pub flow: FlowBc,
}

/// Boundary conditions per tag on the boundary of the porous region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoroBoundary(pub BTreeMap<BoundaryTag, TagCondition>);

impl Default for PoroBoundary {
    fn default() -> Self {
        use DisplacementBc::*;
        use FlowBc::*;
        let c = |displacement, flow| TagCondition { displacement, flow };
        PoroBoundary(BTreeMap::from([
            (BoundaryTag::PorousWall, c(Fixed, Drained)),
            (BoundaryTag::Inflow, c(Free, Drained)),
            (BoundaryTag::Free, c(Free, NoFlux)),
            (BoundaryTag::Interface, c(Free, NoFlux)),
            (BoundaryTag::FluidWall, c(Free, NoFlux)),
            (BoundaryTag::Outflow, c(Free, NoFlux)),
        ]))
    }
}

impl PoroBoundary {
    pub fn get(&self, tag: BoundaryTag) -> TagCondition {
        self.0.get(&tag).copied().unwrap_or(TagCondition {
            displacement: DisplacementBc::Free,
            flow: FlowBc::NoFlux,
        })
    }

    pub fn with(mut self, tag: BoundaryTag, displacement: DisplacementBc, flow: FlowBc) -> Self {
        self.0.insert(tag, TagCondition { displacement, flow });
        self
    }
}

/// Boundary loads at the new time level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoroLoads {
    /// normal pressure P per tag: traction `-P n`
    pub normal_pressure: BTreeMap<BoundaryTag, f64>,
    /// pore pressure on drained faces of a tag (default zero)
    pub pore_pressure: BTreeMap<BoundaryTag, f64>,
}

impl PoroLoads {
    pub fn none() -> Self {
        Self::default()
    }

    /// Traction `-p n` and pore pressure `p` on the same tag.
    pub fn pressurised(tag: BoundaryTag, p: f64) -> Self {
        PoroLoads {
            normal_pressure: BTreeMap::from([(tag, p)]),
            pore_pressure: BTreeMap::from([(tag, p)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoroState {
    /// displacement, blocked by component
    pub eta: Vec<f64>,
    /// Darcy flux per RT0 dof (total flux across the face along its normal)
    pub u: Vec<f64>,
    /// pore pressure per element of the region
    pub p: Vec<f64>,
    pub velocity: Option<Vec<f64>>,
    pub acceleration: Option<Vec<f64>>,
    pub t: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PoroError {
    #[error("mesh has no faces tagged {0}")]
    MissingTag(BoundaryTag),
    #[error("the porous region has no elements")]
    EmptyRegion,
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("time step was assembled for dt = {assembled}, got {requested}")]
    TimeStep { assembled: f64, requested: f64 },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_values() {
        let (l, m) = lame_from_table(&MechParams::default()).unwrap();
        assert!((l - 17.19).abs() < 5e-3, "{l}");
        assert!((m - 34.28).abs() < 5e-3, "{m}");
        let (l, m) = lame_from_table(&MechParams {
            nu: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((l, m), (0.0, 40.0));
        assert_eq!(
            lame_from_table(&MechParams {
                nu: 0.5,
                ..Default::default()
            })
            .unwrap_err()
            .key,
            "nu"
        );
    }

    #[test]
    fn validation_names_key() {
        let e = MechParams {
            nu: 0.6,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(e.key, "nu");
        assert!(MechParams::default().validate().is_ok());
        assert!((MechParams::default().mobility() - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn inflow_peak() {
        assert!((MechParams::default().inflow_pressure(0.5) - 10.0).abs() < 1e-12);
    }
}
