use serde::{Deserialize, Serialize};

use super::config::{PlantConfig, SchedulePoint};
use super::model::build_plant;
use super::solver::simulate_plant;
use crate::error::{Error, Result};
use crate::profile::DriveProfiles;

/// Successive-level change below which the mesh counts as converged.
pub const CONVERGENCE_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub n_axial: usize,
    pub n_stack: usize,
    pub nodes: usize,
    pub final_t_avg: f64,
    /// `|T_k − T_{k−1}| / |T_k − T_in|`: the change relative to the
    /// temperature rise over the inlet. `None` for the first level.
    pub rel_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub levels: Vec<GridLevel>,
    pub converged: bool,
}

/// Runs the same constant-drive scenario on each `(n_axial, n_stack)` mesh.
pub fn grid_independence(
    config: &PlantConfig,
    levels: &[(usize, usize)],
    drive: SchedulePoint,
    t_end: f64,
    dt: f64,
) -> Result<GridStudy> {
    if levels.len() < 2 {
        return Err(Error::Domain("grid study needs at least two levels".into()));
    }
    let mut out: Vec<GridLevel> = Vec::with_capacity(levels.len());
    for &(n_axial, n_stack) in levels {
        let model = build_plant(&config.clone().with_mesh(n_axial, n_stack))?;
        let run = simulate_plant(
            &model,
            &DriveProfiles::constant(drive.q_gen, drive.m_dot, drive.t_in),
            t_end,
            dt,
        )?;
        let final_t_avg = run.trajectory.final_t_avg().expect("non-empty run");
        let rel_change = out.last().map(|prev| {
            let rise = (final_t_avg - drive.t_in).abs().max(f64::MIN_POSITIVE);
            (final_t_avg - prev.final_t_avg).abs() / rise
        });
        out.push(GridLevel {
            n_axial,
            n_stack,
            nodes: model.node_count(),
            final_t_avg,
            rel_change,
        });
    }
    let converged = out
        .last()
        .and_then(|l| l.rel_change)
        .is_some_and(|c| c < CONVERGENCE_THRESHOLD);
    Ok(GridStudy {
        levels: out,
        converged,
    })
}
