use super::grid::{AxisMetric, LpvGrid};
use crate::plant::SchedulePoint;
use crate::table::bracket;

/// Mode parameters at one scheduling point, time constants descending.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeParams {
    pub gains: Vec<f64>,
    pub taus: Vec<f64>,
}

/// Lower index and upper weight along one axis; flags clamping.
fn axis_weight(axis: &[f64], metric: AxisMetric, x: f64) -> (usize, f64, bool) {
    let first = axis[0];
    let last = axis[axis.len() - 1];
    let clamped = x < first || x > last || x.is_nan();
    let x = if x.is_nan() {
        first
    } else {
        x.clamp(first, last)
    };
    if axis.len() == 1 {
        return (0, 0.0, clamped);
    }
    let (i, _) = bracket(axis, x);
    if i + 1 == axis.len() {
        return (i, 0.0, clamped);
    }
    let (a, b) = (axis[i], axis[i + 1]);
    let w = if x == a {
        0.0
    } else if x == b {
        1.0
    } else {
        let (fa, fb, fx) = (metric.apply(a), metric.apply(b), metric.apply(x));
        ((fx - fa) / (fb - fa)).clamp(0.0, 1.0)
    };
    (i, w, clamped)
}

impl LpvGrid {
    /// Interpolated parameters and whether any coordinate was clamped.
    pub fn interpolate(&self, p: &SchedulePoint) -> (ModeParams, bool) {
        let axes = self.axes();
        let m = self.metrics();
        let per_axis = [
            axis_weight(&axes.q_gen, m.q_gen, p.q_gen),
            axis_weight(&axes.m_dot, m.m_dot, p.m_dot),
            axis_weight(self.t_axis_k(), m.t_in, p.t_in),
        ];
        let clamped = per_axis.iter().any(|a| a.2);
        let shape = axes.shape();

        let mut corners: Vec<([usize; 3], f64)> = Vec::with_capacity(8);
        for corner in 0..8usize {
            let mut idx = [0usize; 3];
            let mut weight = 1.0;
            for (d, &(i, w, _)) in per_axis.iter().enumerate() {
                let upper = corner >> d & 1 == 1;
                let (j, wd) = if upper { (i + 1, w) } else { (i, 1.0 - w) };
                if wd == 0.0 || j >= shape[d] {
                    weight = 0.0;
                    break;
                }
                idx[d] = j;
                weight *= wd;
            }
            if weight > 0.0 {
                corners.push((idx, weight));
            }
        }

        if let [(idx, _)] = corners[..] {
            let v = self.vertex(idx);
            return (
                ModeParams {
                    gains: v.gains.clone(),
                    taus: v.taus.clone(),
                },
                clamped,
            );
        }
        let n = self.order();
        let mut gains = vec![0.0; n];
        let mut log_taus = vec![0.0; n];
        for (idx, w) in &corners {
            let v = self.vertex(*idx);
            for k in 0..n {
                gains[k] += w * v.gains[k];
                log_taus[k] += w * v.taus[k].ln();
            }
        }
        let taus = log_taus.into_iter().map(f64::exp).collect();
        (ModeParams { gains, taus }, clamped)
    }
}

/// Interpolated mode parameters at `p`; coordinates outside the grid are
/// clamped to its boundary.
pub fn interpolate_model(grid: &LpvGrid, p: &SchedulePoint) -> ModeParams {
    grid.interpolate(p).0
}
