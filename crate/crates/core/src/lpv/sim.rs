use super::grid::LpvGrid;
use super::interp::ModeParams;
use crate::error::{ensure_finite, Result};
use crate::plant::SchedulePoint;
use crate::profile::{step_count, DriveProfiles};
use crate::rom::LtiState;
use crate::trajectory::SimulationResult;

/// Mode states shared across scheduling changes.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvState {
    pub x: LtiState,
    /// Parameters used by the most recent step.
    pub last_params: Option<ModeParams>,
}

impl LpvState {
    pub fn rest(grid: &LpvGrid) -> Self {
        Self {
            x: LtiState::zero(grid.order()),
            last_params: None,
        }
    }

    pub fn t_avg(&self, grid: &LpvGrid) -> f64 {
        grid.t0_temperature() + self.x.sum()
    }
}

/// Advances `state` by `dt` with parameters frozen at `p`. Returns the new
/// average temperature and whether `p` had to be clamped into the grid.
pub fn step_lpv(
    grid: &LpvGrid,
    state: &mut LpvState,
    p: &SchedulePoint,
    dt: f64,
) -> Result<(f64, bool)> {
    let (params, clamped) = grid.interpolate(p);
    state.x.advance(&params.gains, &params.taus, p.q_gen, dt);
    state.last_params = Some(params);
    let t = state.t_avg(grid);
    ensure_finite("LPV output", t)?;
    Ok((t, clamped))
}

/// Scheduled trajectory plus the number of steps that needed clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvRun {
    pub trajectory: SimulationResult,
    pub clamp_count: usize,
}

/// Runs the grid from rest with the drive sampled at the start of each step.
pub fn simulate_lpv(
    grid: &LpvGrid,
    profiles: &DriveProfiles,
    t_end: f64,
    dt: f64,
) -> Result<LpvRun> {
    let steps = step_count(t_end, dt)?;
    let mut state = LpvState::rest(grid);
    let mut t = Vec::with_capacity(steps + 1);
    let mut t_avg = Vec::with_capacity(steps + 1);
    t.push(0.0);
    t_avg.push(state.t_avg(grid));
    let mut clamp_count = 0;
    for k in 0..steps {
        let (temp, clamped) = step_lpv(grid, &mut state, &profiles.at(k as f64 * dt), dt)?;
        clamp_count += usize::from(clamped);
        t.push((k + 1) as f64 * dt);
        t_avg.push(temp);
    }
    Ok(LpvRun {
        trajectory: SimulationResult {
            t,
            t_avg,
            t_max: None,
            t_out: None,
        },
        clamp_count,
    })
}
