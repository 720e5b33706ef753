//! Gridded linear parameter-varying thermal model.
//!
//! Each grid vertex holds a Foster model identified at one
//! `(q̇, ṁ, T_in)` operating point. At run time the mode parameters are
//! interpolated multilinearly at the current scheduling point (gains
//! linearly, time constants in log space) and a single mode-state vector is
//! advanced with the interpolated parameters.

mod grid;
mod interp;
mod sim;

pub use grid::{
    build_lpv_grid, AxisMetric, AxisMetrics, GridBuildOptions, GridProvenance, LpvAxes, LpvGrid,
    GRID_FORMAT_VERSION,
};
pub use interp::{interpolate_model, ModeParams};
pub use sim::{simulate_lpv, step_lpv, LpvRun, LpvState};
