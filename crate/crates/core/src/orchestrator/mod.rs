//! Staggered time loop: mechanics (when due), stimulus and rates, one
//! biology step, observers.

mod plan;
mod run;

pub use plan::{RunMode, RunPlan};
pub use run::{
    checkpoint_name, run, MechState, Phase, RunError, RunFailure, RunReport, RunStats, SimState,
    Simulation, CELLS_CSV, MECHANICS_CSV, REPORT_TXT, SUMMARY_CSV,
};
