use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::validate::{self, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Stokes channel coupled to the Biot wall, driving the cells
    Coupled,
    /// Biot wall alone, pressurised on `Inflow`, driving the cells
    Fallback,
    #[default]
    BiologyOnly,
    /// mechanics alone: coupled if the mesh has a fluid region, else the pressurised wall
    MechanicsOnly,
}

impl RunMode {
    pub fn has_biology(self) -> bool {
        self != RunMode::MechanicsOnly
    }

    pub fn has_mechanics(self) -> bool {
        matches!(
            self,
            RunMode::Coupled | RunMode::Fallback | RunMode::MechanicsOnly
        )
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coupled" => Ok(RunMode::Coupled),
            "fallback" => Ok(RunMode::Fallback),
            "biology-only" => Ok(RunMode::BiologyOnly),
            "mechanics-only" => Ok(RunMode::MechanicsOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected coupled, fallback, biology-only or mechanics-only)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunPlan {
    pub dt: f64,
    pub n_steps: usize,
    pub mode: RunMode,
    /// mechanics is solved every `mech_cadence` biology steps, with step `dt · mech_cadence`
    pub mech_cadence: usize,
    /// solve mechanics once at the first step and keep the stimulus
    pub frozen_stress: bool,
    pub output_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_stride: Option<usize>,
    pub out_dir: PathBuf,
    pub vtk: bool,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            dt: 0.1,
            n_steps: 300,
            mode: RunMode::BiologyOnly,
            mech_cadence: 1,
            frozen_stress: false,
            output_stride: 10,
            checkpoint_stride: None,
            out_dir: PathBuf::from("out"),
            vtk: true,
        }
    }
}

impl RunPlan {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::positive("dt", self.dt)?;
        validate::at_least_one("n_steps", self.n_steps)?;
        validate::at_least_one("mech_cadence", self.mech_cadence)?;
        validate::at_least_one("output_stride", self.output_stride)?;
        if let Some(c) = self.checkpoint_stride {
            validate::at_least_one("checkpoint_stride", c)?;
        }
        Ok(())
    }

    /// Mechanics is due before biology step `step` (1-based).
    pub fn mechanics_due(&self, step: usize) -> bool {
        if self.frozen_stress {
            step == 1
        } else {
            (step - 1) % self.mech_cadence == 0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cadence() {
        let p = RunPlan {
            mech_cadence: 3,
            ..Default::default()
        };
        let due: Vec<usize> = (1..=7).filter(|&s| p.mechanics_due(s)).collect();
        assert_eq!(due, vec![1, 4, 7]);
        let frozen = RunPlan {
            frozen_stress: true,
            ..p
        };
        assert!(frozen.mechanics_due(1) && !frozen.mechanics_due(4));
    }

    #[test]
    fn bounds() {
        assert!(RunPlan::default().validate().is_ok());
        let bad = RunPlan {
            output_stride: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "output_stride");
        assert!("fallback".parse::<RunMode>().is_ok());
        assert!("both".parse::<RunMode>().is_err());
    }
}
