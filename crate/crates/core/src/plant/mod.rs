//! Finite-volume thermal model of a prismatic cell between two water-cooled
//! plates.
//!
//! The mesh is one-dimensional along the flow and one-dimensional through the
//! stack. Side surfaces are insulated. Under [`Symmetry::Half`] only half the
//! cell thickness, one plate and one channel are meshed and the midplane is
//! adiabatic. The scheduled mass flow is the total over both plates.

mod banded;
mod config;
mod grid_study;
mod model;
mod solver;

pub use config::{Materials, PlantConfig, SchedulePoint, Symmetry, ThermalMaterial, TimeScheme};
pub use grid_study::{grid_independence, GridLevel, GridStudy};
pub use model::{build_plant, h_conv, reynolds, water_viscosity, PlantModel, PlantState};
pub use solver::{
    explicit_stability_limit, simulate_plant, step_plant, EnergyLedger, PlantRun, PlantSimulator,
};
