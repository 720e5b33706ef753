use serde::{Deserialize, Serialize};

use crate::ecm::EcmParams;
use crate::error::{Error, Result};
use crate::lpv::{AxisMetrics, GridBuildOptions};
use crate::plant::PlantConfig;
use crate::profile::Profile;
use crate::rom::FitOptions;

const VALIDATION_HEAT_CSV: &str = include_str!("../../data/validation_heat.csv");
const FLOW_STUDY_HEAT_CSV: &str = include_str!("../../data/flow_study_heat.csv");

/// Shipped heat profile for the LTI and LPV comparisons: 2×10⁵ W/m³ for the
/// first 200 s, then a reconstructed staircase up to 5×10⁶ W/m³.
pub fn validation_heat_profile() -> Profile {
    Profile::read_csv(VALIDATION_HEAT_CSV.as_bytes(), "q_gen_W_m3").expect("shipped profile parses")
}

/// Shipped, reconstructed heat profile for the flow-rate study (10 s hold).
pub fn flow_study_heat_profile() -> Profile {
    Profile::read_csv(FLOW_STUDY_HEAT_CSV.as_bytes(), "q_gen_W_m3").expect("shipped profile parses")
}

/// Heat-generation vertices of the single-flow grid, W/m³.
pub const HEAT_ONLY_Q_AXIS: [f64; 7] = [8e4, 1e5, 5e5, 1e6, 5e6, 1e7, 5e7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub m_dot: f64,
    pub t_in_c: f64,
    /// Defaults to [`validation_heat_profile`].
    pub heat_profile: Option<Profile>,
    pub t_end: f64,
    /// Step-response length used to identify the vertex models.
    pub extraction_t_end: f64,
    /// Window in which the sign of the initial slope is compared.
    pub early_window_s: f64,
    /// Vertex whose LTI model is checked for a wrong-signed initial slope.
    pub sign_check_q: f64,
    /// Pointwise relative error the LPV model must stay under.
    pub tolerance_pct: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            m_dot: 2e-3,
            t_in_c: 5.0,
            heat_profile: None,
            t_end: 1800.0,
            extraction_t_end: 3000.0,
            early_window_s: 200.0,
            sign_check_q: 5e6,
            tolerance_pct: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowStudyConfig {
    pub mean_flow: f64,
    /// Target flow CoV per case, percent.
    pub target_covs_pct: Vec<f64>,
    pub t_in_c: f64,
    /// Defaults to [`flow_study_heat_profile`].
    pub heat_profile: Option<Profile>,
    pub t_end: f64,
    /// Samples before this time are left out of the temperature spread.
    pub warmup_s: f64,
    pub grid_t_end: f64,
    /// Also run the plant on every case as a reference.
    pub run_plant: bool,
}

impl Default for FlowStudyConfig {
    fn default() -> Self {
        Self {
            mean_flow: 8e-4,
            target_covs_pct: vec![0.0, 2.8, 8.4, 14.0],
            t_in_c: 15.0,
            heat_profile: None,
            t_end: 3600.0,
            warmup_s: 600.0,
            grid_t_end: 8000.0,
            run_plant: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledConfig {
    /// Cell current in A, positive on discharge.
    pub current: Profile,
    pub soc0: f64,
    pub m_dot: f64,
    pub t_in_c: f64,
    pub t_end: f64,
    /// Thermal-to-electrical exchange period, in thermal steps.
    pub exchange_every: usize,
    /// Defaults to [`EcmParams::default_synthetic`].
    pub ecm: Option<EcmParams>,
    pub extraction_t_end: f64,
    /// Heat-generation vertices of the coupled grid, W/m³.
    pub q_axis: Vec<f64>,
    pub tolerance_pct: f64,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        Self {
            current: Profile::constant(45.0),
            soc0: 0.95,
            m_dot: 5e-4,
            t_in_c: 25.0,
            t_end: 1500.0,
            exchange_every: 1,
            ecm: None,
            extraction_t_end: 3000.0,
            q_axis: HEAT_ONLY_Q_AXIS.to_vec(),
            tolerance_pct: 4.0,
        }
    }
}

/// Everything the studies need. Every field has a default, so `{}` is a
/// valid configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub plant: PlantConfig,
    pub dt: f64,
    pub order: usize,
    pub fit: FitOptions,
    pub metrics: AxisMetrics,
    pub shared_time_constants: bool,
    pub validation: ValidationConfig,
    pub flow: FlowStudyConfig,
    pub coupled: CoupledConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            dt: 0.5,
            order: 4,
            fit: FitOptions::default(),
            metrics: AxisMetrics::default(),
            shared_time_constants: true,
            validation: ValidationConfig::default(),
            flow: FlowStudyConfig::default(),
            coupled: CoupledConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be > 0", self.dt)));
        }
        if self.order == 0 {
            return Err(Error::Config("order must be >= 1".into()));
        }
        if self.coupled.exchange_every == 0 {
            return Err(Error::Config("exchange_every must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.coupled.soc0) {
            return Err(Error::Config(format!(
                "soc0 = {} outside [0, 1]",
                self.coupled.soc0
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        crate::hash_json(self)
    }

    /// Grid build settings for step responses of length `t_end`.
    pub fn grid_options(&self, t_end: f64, shared: bool) -> GridBuildOptions {
        GridBuildOptions {
            order: self.order,
            t_end,
            dt: self.dt,
            fit: self.fit.clone(),
            metrics: self.metrics,
            shared_time_constants: shared,
            ..GridBuildOptions::default()
        }
    }

    pub fn validation_heat(&self) -> Profile {
        self.validation
            .heat_profile
            .clone()
            .unwrap_or_else(validation_heat_profile)
    }

    pub fn flow_heat(&self) -> Profile {
        self.flow
            .heat_profile
            .clone()
            .unwrap_or_else(flow_study_heat_profile)
    }
}
