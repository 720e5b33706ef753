//! Step-response identification of Foster-network LTI models.
//!
//! A Foster model of order `N` has the unit step response
//! `ĝ(t) = Σ g_i·(1 − e^{−t/τ_i})` and is simulated with an exact
//! zero-order-hold update per mode.

mod foster;
mod lti;
mod step_response;

pub use foster::{fit_foster, FitOptions, FosterFit, FosterLtiModel, SharedFosterFit};
pub use lti::{simulate_lti, LtiState};
pub use step_response::{extract_step_response, StepResponse, SETTLING_SLOPE};
