use super::foster::FosterLtiModel;
use crate::error::{ensure_finite, Result};
use crate::profile::{step_count, Profile};
use crate::trajectory::SimulationResult;

/// Mode states of a running Foster model (K).
#[derive(Debug, Clone, PartialEq)]
pub struct LtiState {
    pub x: Vec<f64>,
}

impl LtiState {
    pub fn zero(order: usize) -> Self {
        Self {
            x: vec![0.0; order],
        }
    }

    /// Exact zero-order-hold update of each mode over `dt` with input `q`.
    pub fn advance(&mut self, gains: &[f64], taus: &[f64], q: f64, dt: f64) {
        for ((x, g), tau) in self.x.iter_mut().zip(gains).zip(taus) {
            let a = (-dt / tau).exp();
            *x = a * *x + g * (1.0 - a) * q;
        }
    }

    pub fn sum(&self) -> f64 {
        self.x.iter().sum()
    }
}

/// Drives a Foster model with `q_profile` from rest. The output is
/// `t0_temperature + Σ x_i`; flow and inlet temperature enter only through
/// the model's own extraction point.
pub fn simulate_lti(
    model: &FosterLtiModel,
    q_profile: &Profile,
    t0_temperature: f64,
    t_end: f64,
    dt: f64,
) -> Result<SimulationResult> {
    let steps = step_count(t_end, dt)?;
    let mut state = LtiState::zero(model.order);
    let mut t = Vec::with_capacity(steps + 1);
    let mut t_avg = Vec::with_capacity(steps + 1);
    t.push(0.0);
    t_avg.push(t0_temperature);
    for k in 0..steps {
        let q = q_profile.value_at(k as f64 * dt);
        state.advance(&model.gains, &model.taus, q, dt);
        t.push((k + 1) as f64 * dt);
        t_avg.push(t0_temperature + state.sum());
    }
    ensure_finite("LTI output", *t_avg.last().expect("sample"))?;
    Ok(SimulationResult {
        t,
        t_avg,
        t_max: None,
        t_out: None,
    })
}
