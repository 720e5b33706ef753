//! Scenario runner: error metrics, flow-profile construction, the LTI
//! failure, LPV validation and flow-rate studies, and the closed-loop
//! electro-thermal run. Every study returns a [`StudyReport`] that can be
//! written as JSON plus per-case CSVs and a plot script.

mod config;
mod coupled;
mod flow;
mod metrics;
mod report;
mod scenarios;

pub use config::{
    flow_study_heat_profile, validation_heat_profile, CoupledConfig, FlowStudyConfig, StudyConfig,
    ValidationConfig, HEAT_ONLY_Q_AXIS,
};
pub use coupled::{run_coupled, run_ecm_coupled, CoupledRun, ThermalBackend};
pub use flow::make_proportional_flow;
pub use metrics::{cov, metric_errors, metric_errors_until, std_dev, ErrorMetrics};
pub use report::{CaseMetrics, CaseReport, Signals, StudyReport, PLOT_SCRIPT};
pub use scenarios::{
    flow_study_grid, scenario_flow_study, scenario_flow_study_with, scenario_lpv_validation,
    scenario_lti_failure,
};
