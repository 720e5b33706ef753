use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bulk properties of one material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalMaterial {
    /// Density (kg/m³).
    pub rho: f64,
    /// Specific heat at constant pressure (J/(kg·K)).
    pub cp: f64,
    /// Thermal conductivity (W/(m·K)).
    pub lambda: f64,
    /// Dynamic viscosity (Pa·s); only meaningful for the coolant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl ThermalMaterial {
    pub const fn aluminum() -> Self {
        Self {
            rho: 2719.0,
            cp: 871.0,
            lambda: 202.4,
            mu: None,
        }
    }

    pub const fn water() -> Self {
        Self {
            rho: 998.2,
            cp: 4128.0,
            lambda: 0.6,
            mu: Some(1.003e-3),
        }
    }

    /// Cell bulk properties. The specific heat of 100 J/(kg·K) is far below
    /// typical Li-ion values (~1000); it is kept as the default regardless.
    pub const fn battery() -> Self {
        Self {
            rho: 2500.0,
            cp: 100.0,
            lambda: 3.0,
            mu: None,
        }
    }

    /// Volumetric heat capacity ρ·C_p (J/(m³·K)).
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.rho) && ok(self.cp) && ok(self.lambda)) {
            return Err(Error::Config(format!(
                "{name}: rho, cp and lambda must be finite and > 0"
            )));
        }
        if let Some(mu) = self.mu {
            if !ok(mu) {
                return Err(Error::Config(format!("{name}: mu must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub battery: ThermalMaterial,
    pub aluminum: ThermalMaterial,
    pub water: ThermalMaterial,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            battery: ThermalMaterial::battery(),
            aluminum: ThermalMaterial::aluminum(),
            water: ThermalMaterial::water(),
        }
    }
}

/// Which part of the through-thickness stack is meshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Half the cell thickness, one plate and one channel; insulated midplane.
    #[default]
    Half,
    /// Full cell thickness between two plates and two channels.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Backward Euler on all links, explicit source and inlet. Unconditionally stable.
    #[default]
    SemiImplicit,
    /// Forward Euler; subject to a per-node stability bound.
    Explicit,
}

/// Geometry, mesh and material description of the cell and cold plates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Cell length along the flow direction (m).
    pub cell_length: f64,
    pub cell_width: f64,
    /// Full cell thickness (m).
    pub cell_thickness: f64,
    pub plate_thickness: f64,
    /// Height of the parallel-plate channel inside each cold plate (m).
    pub channel_gap: f64,
    pub n_axial: usize,
    /// Cell layers through half the thickness.
    pub n_stack: usize,
    pub materials: Materials,
    pub nusselt: f64,
    /// Uniform initial temperature of every node (K).
    pub initial_temperature: f64,
    /// Fraction of the total mass flow carried by each plate's channel.
    pub flow_fraction_per_plate: f64,
    pub symmetry: Symmetry,
    pub scheme: TimeScheme,
    /// Set to false to cut the conductive path between cell and plate.
    pub cell_plate_contact: bool,
    /// Use a temperature-dependent water viscosity for Reynolds reporting.
    pub variable_viscosity: bool,
    /// Start the channel water at the inlet temperature instead of
    /// `initial_temperature` (flow established before the run begins).
    pub prime_coolant: bool,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            cell_length: 0.15,
            cell_width: 0.10,
            cell_thickness: 0.01,
            plate_thickness: 0.003,
            channel_gap: 0.002,
            n_axial: 20,
            n_stack: 3,
            materials: Materials::default(),
            nusselt: 8.23,
            initial_temperature: 300.0,
            flow_fraction_per_plate: 0.5,
            symmetry: Symmetry::Half,
            scheme: TimeScheme::SemiImplicit,
            cell_plate_contact: true,
            variable_viscosity: false,
            prime_coolant: true,
        }
    }
}

impl PlantConfig {
    /// Cell thermally isolated from its surroundings: no convection and no
    /// cell-to-plate conduction.
    pub fn adiabatic(mut self) -> Self {
        self.nusselt = 0.0;
        self.cell_plate_contact = false;
        self
    }

    pub fn with_mesh(mut self, n_axial: usize, n_stack: usize) -> Self {
        self.n_axial = n_axial;
        self.n_stack = n_stack;
        self
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_length * self.cell_width * self.cell_thickness
    }

    /// Hydraulic diameter of the channel in the wide-channel limit.
    pub fn hydraulic_diameter(&self) -> f64 {
        2.0 * self.channel_gap
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("cell_length", self.cell_length),
            ("cell_width", self.cell_width),
            ("cell_thickness", self.cell_thickness),
            ("plate_thickness", self.plate_thickness),
            ("channel_gap", self.channel_gap),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be > 0")));
            }
        }
        if self.n_axial < 2 {
            return Err(Error::Config(format!(
                "n_axial = {} must be >= 2",
                self.n_axial
            )));
        }
        if self.n_stack < 1 {
            return Err(Error::Config("n_stack must be >= 1".into()));
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature > 0.0) {
            return Err(Error::Config("initial_temperature must be > 0 K".into()));
        }
        if !(self.nusselt.is_finite() && self.nusselt >= 0.0) {
            return Err(Error::Config("nusselt must be finite and >= 0".into()));
        }
        if !(self.flow_fraction_per_plate > 0.0 && self.flow_fraction_per_plate <= 1.0) {
            return Err(Error::Config(
                "flow_fraction_per_plate must be in (0, 1]".into(),
            ));
        }
        self.materials.battery.validate("battery")?;
        self.materials.aluminum.validate("aluminum")?;
        self.materials.water.validate("water")?;
        if self.materials.water.mu.is_none() {
            return Err(Error::Config("water viscosity mu is required".into()));
        }
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON encoding, used for provenance.
    pub fn hash(&self) -> String {
        crate::hash_json(self)
    }
}

/// One instant of the scheduling signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    /// Volumetric heat generation (W/m³).
    pub q_gen: f64,
    /// Total coolant mass flow (kg/s).
    pub m_dot: f64,
    /// Inlet water temperature (K).
    pub t_in: f64,
}

impl SchedulePoint {
    pub fn new(q_gen: f64, m_dot: f64, t_in_k: f64) -> Self {
        Self {
            q_gen,
            m_dot,
            t_in: t_in_k,
        }
    }

    pub fn with_celsius_inlet(q_gen: f64, m_dot: f64, t_in_c: f64) -> Self {
        Self::new(q_gen, m_dot, crate::units::celsius_to_kelvin(t_in_c))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.q_gen.is_finite() {
            return Err(Error::Numeric(format!(
                "q_gen = {} is not finite",
                self.q_gen
            )));
        }
        if !(self.m_dot.is_finite() && self.m_dot >= 0.0) {
            return Err(Error::Domain(format!(
                "m_dot = {} must be >= 0",
                self.m_dot
            )));
        }
        if !(self.t_in.is_finite() && self.t_in > 0.0) {
            return Err(Error::Domain(format!("t_in = {} K must be > 0", self.t_in)));
        }
        Ok(())
    }
}
