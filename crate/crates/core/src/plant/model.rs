use serde::{Deserialize, Serialize};

use super::config::{PlantConfig, Symmetry};
use crate::error::{Error, Result};

/// Conductive or convective link between two nodes (W/K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Link {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
}

/// One coolant channel: nodes ordered inlet to outlet.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Channel {
    pub nodes: Vec<usize>,
    pub flow_fraction: f64,
}

/// The meshed plant. Immutable after [`build_plant`].
///
/// Nodes are numbered column by column along the flow so the system matrix is
/// banded. Cell node `(j, k)` sits at axial column `j` and layer `k`, layer 0
/// touching the first plate.
#[derive(Debug, Clone)]
pub struct PlantModel {
    config: PlantConfig,
    h: f64,
    pub(crate) capacity: Vec<f64>,
    /// Cell volume held by each node (zero for plate and coolant nodes).
    pub(crate) cell_volume: Vec<f64>,
    pub(crate) links: Vec<Link>,
    pub(crate) channels: Vec<Channel>,
    /// Global node index of each cell, plate and coolant node in
    /// [`PlantState`] order.
    pub(crate) cell_ids: Vec<usize>,
    pub(crate) plate_ids: Vec<usize>,
    pub(crate) coolant_ids: Vec<usize>,
    /// Half bandwidth of the system matrix.
    pub(crate) bandwidth: usize,
    n_layers: usize,
    n_plates: usize,
}

/// Temperature field of the plant (K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Cell temperatures, `n_axial × layers` row-major by axial column.
    pub t_cell: Vec<f64>,
    /// Plate temperature per axial node, plate-major when there are two plates.
    pub t_plate: Vec<f64>,
    /// Coolant temperature per axial node, channel-major.
    pub t_coolant: Vec<f64>,
}

impl PlantState {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .t_cell
            .iter()
            .chain(&self.t_plate)
            .chain(&self.t_coolant);
        for &t in all {
            if !t.is_finite() {
                return Err(Error::Numeric(format!(
                    "plant temperature {t} is not finite"
                )));
            }
            if t <= 0.0 {
                return Err(Error::Domain(format!(
                    "plant temperature {t} K is not positive"
                )));
            }
        }
        Ok(())
    }
}

impl PlantModel {
    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    /// Plate-to-coolant heat transfer coefficient used by the mesh (W/(m²·K)).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.capacity.len()
    }

    pub fn n_cell_nodes(&self) -> usize {
        self.config.n_axial * self.n_layers
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_plates(&self) -> usize {
        self.n_plates
    }

    /// Volume of the meshed cell region (half the cell under half symmetry).
    pub fn meshed_cell_volume(&self) -> f64 {
        self.cell_volume.iter().sum()
    }

    /// Cell node volumes in [`PlantState::t_cell`] order.
    pub fn cell_node_volumes(&self) -> Vec<f64> {
        self.cell_ids.iter().map(|&i| self.cell_volume[i]).collect()
    }

    pub fn node_capacities(&self) -> &[f64] {
        &self.capacity
    }

    pub(crate) fn to_flat(&self, state: &PlantState) -> Vec<f64> {
        let mut v = vec![0.0; self.node_count()];
        self.scatter(state, &mut v);
        v
    }

    pub(crate) fn scatter(&self, state: &PlantState, flat: &mut [f64]) {
        for (ids, vals) in [
            (&self.cell_ids, &state.t_cell),
            (&self.plate_ids, &state.t_plate),
            (&self.coolant_ids, &state.t_coolant),
        ] {
            for (&i, &v) in ids.iter().zip(vals) {
                flat[i] = v;
            }
        }
    }

    pub(crate) fn state_from_flat(&self, flat: &[f64]) -> PlantState {
        let gather = |ids: &[usize]| ids.iter().map(|&i| flat[i]).collect();
        PlantState {
            t_cell: gather(&self.cell_ids),
            t_plate: gather(&self.plate_ids),
            t_coolant: gather(&self.coolant_ids),
        }
    }

    pub fn uniform_state(&self, temperature: f64) -> PlantState {
        let n = self.config.n_axial;
        PlantState {
            t_cell: vec![temperature; self.n_cell_nodes()],
            t_plate: vec![temperature; self.n_plates * n],
            t_coolant: vec![temperature; self.n_plates * n],
        }
    }

    /// Solids at the configured initial temperature. The channel water starts
    /// at `t_in` when [`PlantConfig::prime_coolant`] is set, otherwise at the
    /// initial temperature as well.
    pub fn initial_state(&self, t_in: f64) -> PlantState {
        let mut s = self.uniform_state(self.config.initial_temperature);
        if self.config.prime_coolant {
            s.t_coolant.fill(t_in);
        }
        s
    }

    pub(crate) fn check_state_shape(&self, state: &PlantState) -> Result<()> {
        let n = self.config.n_axial * self.n_plates;
        if state.t_cell.len() != self.n_cell_nodes()
            || state.t_plate.len() != n
            || state.t_coolant.len() != n
        {
            return Err(Error::Domain("plant state does not match the mesh".into()));
        }
        Ok(())
    }

    /// Volume-weighted cell-average temperature.
    pub fn cell_average(&self, state: &PlantState) -> f64 {
        let (num, den) =
            state
                .t_cell
                .iter()
                .zip(&self.cell_ids)
                .fold((0.0, 0.0), |(num, den), (t, &i)| {
                    let v = self.cell_volume[i];
                    (num + t * v, den + v)
                });
        num / den
    }

    pub fn cell_max(&self, state: &PlantState) -> f64 {
        state
            .t_cell
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mixed-mean outlet temperature over all channels.
    pub fn outlet_temperature(&self, state: &PlantState) -> f64 {
        let n = self.config.n_axial;
        let (num, den) = (0..self.n_plates).fold((0.0, 0.0), |(num, den), p| {
            let f = self.channels[p].flow_fraction;
            (num + f * state.t_coolant[p * n + n - 1], den + f)
        });
        num / den
    }

    /// Total flow through the meshed channels as a fraction of the scheduled flow.
    pub(crate) fn meshed_flow_fraction(&self) -> f64 {
        self.channels.iter().map(|c| c.flow_fraction).sum()
    }

    /// Internal energy relative to 0 K, Σ C_i·T_i (J).
    pub fn internal_energy(&self, state: &PlantState) -> f64 {
        let flat = self.to_flat(state);
        flat.iter().zip(&self.capacity).map(|(t, c)| t * c).sum()
    }
}

/// Fully developed laminar heat transfer coefficient in a wide parallel-plate
/// channel, `h = Nu·λ_w / D_h` with `D_h = 2·gap`. Independent of flow rate.
pub fn h_conv(config: &PlantConfig, m_dot: f64, _coolant_temperature: f64) -> f64 {
    debug_assert!(m_dot >= 0.0, "negative mass flow");
    config.nusselt * config.materials.water.lambda / config.hydraulic_diameter()
}

/// Vogel-type fit for liquid water viscosity (Pa·s), valid roughly 273-370 K.
pub fn water_viscosity(temperature: f64) -> f64 {
    2.414e-5 * 10f64.powf(247.8 / (temperature - 140.0))
}

/// Channel Reynolds number `Re = ṁ_ch·D_h / (A_c·μ)` for the scheduled total flow.
pub fn reynolds(config: &PlantConfig, m_dot: f64, coolant_temperature: f64) -> f64 {
    let m_channel = m_dot * config.flow_fraction_per_plate;
    let area = config.cell_width * config.channel_gap;
    let mu = if config.variable_viscosity {
        water_viscosity(coolant_temperature)
    } else {
        config.materials.water.mu.unwrap_or(1.003e-3)
    };
    m_channel * config.hydraulic_diameter() / (area * mu)
}

/// Meshes the cell/plate/coolant stack.
pub fn build_plant(config: &PlantConfig) -> Result<PlantModel> {
    config.validate()?;
    let n = config.n_axial;
    let (n_layers, n_plates) = match config.symmetry {
        Symmetry::Half => (config.n_stack, 1),
        Symmetry::Full => (2 * config.n_stack, 2),
    };
    let dx = config.cell_length / n as f64;
    let dz = 0.5 * config.cell_thickness / config.n_stack as f64;
    let face = config.cell_width * dx;
    if !(face > 0.0 && dz > 0.0) {
        return Err(Error::Config("degenerate geometry: zero node area".into()));
    }
    let m = &config.materials;
    let h = h_conv(config, 0.0, config.initial_temperature);

    // Column layout: half = [cells.., plate, coolant];
    // full = [coolant, plate, cells.., plate, coolant].
    let per_col = n_layers + 2 * n_plates;
    let total = n * per_col;
    let cell_local = |k: usize| if n_plates == 1 { k } else { 2 + k };
    let plate_local = |p: usize| {
        if n_plates == 1 {
            n_layers
        } else if p == 0 {
            1
        } else {
            n_layers + 2
        }
    };
    let cool_local = |p: usize| {
        if n_plates == 1 {
            n_layers + 1
        } else if p == 0 {
            0
        } else {
            n_layers + 3
        }
    };

    let mut capacity = vec![0.0; total];
    let mut cell_volume = vec![0.0; total];
    let mut links = Vec::new();
    let cell = |j: usize, k: usize| j * per_col + cell_local(k);
    let plate = |p: usize, j: usize| j * per_col + plate_local(p);
    let cool = |p: usize, j: usize| j * per_col + cool_local(p);

    let cell_node_volume = face * dz;
    let g_cell_vertical = m.battery.lambda * face / dz;
    let g_cell_axial = m.battery.lambda * config.cell_width * dz / dx;
    let g_plate_axial = m.aluminum.lambda * config.cell_width * config.plate_thickness / dx;
    let half_plate_resistance = 0.5 * config.plate_thickness / (m.aluminum.lambda * face);
    let g_contact = if config.cell_plate_contact {
        1.0 / (0.5 * dz / (m.battery.lambda * face) + half_plate_resistance)
    } else {
        0.0
    };
    let g_convection = if h > 0.0 {
        1.0 / (half_plate_resistance + 1.0 / (h * face))
    } else {
        0.0
    };

    for j in 0..n {
        for k in 0..n_layers {
            let id = cell(j, k);
            capacity[id] = m.battery.heat_capacity() * cell_node_volume;
            cell_volume[id] = cell_node_volume;
            if k + 1 < n_layers {
                links.push(Link {
                    a: id,
                    b: cell(j, k + 1),
                    conductance: g_cell_vertical,
                });
            }
            if j + 1 < n {
                links.push(Link {
                    a: id,
                    b: cell(j + 1, k),
                    conductance: g_cell_axial,
                });
            }
        }
        for p in 0..n_plates {
            capacity[plate(p, j)] = m.aluminum.heat_capacity() * face * config.plate_thickness;
            capacity[cool(p, j)] = m.water.heat_capacity() * face * config.channel_gap;
            let touching = if p == 0 {
                cell(j, 0)
            } else {
                cell(j, n_layers - 1)
            };
            links.push(Link {
                a: touching,
                b: plate(p, j),
                conductance: g_contact,
            });
            links.push(Link {
                a: plate(p, j),
                b: cool(p, j),
                conductance: g_convection,
            });
            if j + 1 < n {
                links.push(Link {
                    a: plate(p, j),
                    b: plate(p, j + 1),
                    conductance: g_plate_axial,
                });
            }
        }
    }
    links.retain(|l| l.conductance > 0.0);

    let channels = (0..n_plates)
        .map(|p| Channel {
            nodes: (0..n).map(|j| cool(p, j)).collect(),
            flow_fraction: config.flow_fraction_per_plate,
        })
        .collect();

    let cell_ids = (0..n)
        .flat_map(|j| (0..n_layers).map(move |k| (j, k)))
        .map(|(j, k)| cell(j, k))
        .collect();
    let plate_ids = (0..n_plates)
        .flat_map(|p| (0..n).map(move |j| (p, j)))
        .map(|(p, j)| plate(p, j))
        .collect();
    let coolant_ids = (0..n_plates)
        .flat_map(|p| (0..n).map(move |j| (p, j)))
        .map(|(p, j)| cool(p, j))
        .collect();

    Ok(PlantModel {
        config: config.clone(),
        h,
        capacity,
        cell_volume,
        links,
        channels,
        cell_ids,
        plate_ids,
        coolant_ids,
        bandwidth: per_col,
        n_layers,
        n_plates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_mesh_node_counts() {
        let model = build_plant(&PlantConfig::default().with_mesh(2, 1)).unwrap();
        assert_eq!(model.n_cell_nodes(), 2);
        let state = model.initial_state(278.15);
        assert_eq!(state.t_plate.len(), 2);
        assert_eq!(state.t_coolant.len(), 2);
        assert_eq!(model.node_count(), 6);
    }

    #[test]
    fn meshed_volume_is_half_the_cell() {
        let cfg = PlantConfig::default();
        let half = 0.5 * cfg.cell_volume();
        for (na, ns) in [(20, 3), (40, 3), (7, 5)] {
            let model = build_plant(&cfg.clone().with_mesh(na, ns)).unwrap();
            assert!((model.meshed_cell_volume() - half).abs() < 1e-12);
        }
    }

    #[test]
    fn full_stack_meshes_the_whole_cell() {
        let cfg = PlantConfig {
            symmetry: Symmetry::Full,
            ..PlantConfig::default()
        };
        let model = build_plant(&cfg).unwrap();
        assert!((model.meshed_cell_volume() - cfg.cell_volume()).abs() < 1e-12);
        assert_eq!(model.n_plates(), 2);
    }

    #[test]
    fn h_conv_hand_value_and_scaling() {
        let cfg = PlantConfig::default();
        // 8.23 * 0.6 / 0.004
        assert!((h_conv(&cfg, 1e-3, 290.0) - 1234.5).abs() < 1e-9);
        let narrow = PlantConfig {
            channel_gap: 0.001,
            ..cfg.clone()
        };
        assert!((h_conv(&narrow, 1e-3, 290.0) - 2469.0).abs() < 1e-9);
        let off = PlantConfig {
            nusselt: 0.0,
            ..cfg
        };
        assert_eq!(h_conv(&off, 1e-3, 290.0), 0.0);
    }

    #[test]
    fn reynolds_hand_value() {
        let cfg = PlantConfig::default();
        assert_eq!(reynolds(&cfg, 0.0, 290.0), 0.0);
        // 1.5e-3 kg/s per channel * 0.004 m / (0.1 m * 0.002 m * 1.003e-3 Pa s)
        let expected = 1.5e-3 * 0.004 / (0.1 * 0.002 * 1.003e-3);
        let re = reynolds(&cfg, 3e-3, 290.0);
        assert!((re - expected).abs() < 1e-9 * expected);
        assert!((re - 29.910_269_192_422_73).abs() < 1e-9);
        assert!((reynolds(&cfg, 6e-3, 290.0) - 2.0 * re).abs() < 1e-9);
    }

    #[test]
    fn viscosity_fit_near_table_value() {
        assert!((water_viscosity(293.15) - 1.003e-3).abs() < 2e-5);
        let cfg = PlantConfig {
            variable_viscosity: true,
            ..PlantConfig::default()
        };
        // Colder water is more viscous.
        assert!(reynolds(&cfg, 3e-3, 278.15) < reynolds(&cfg, 3e-3, 313.15));
    }

    #[test]
    fn rejects_degenerate_config() {
        let cfg = PlantConfig {
            cell_width: 0.0,
            ..PlantConfig::default()
        };
        assert!(matches!(build_plant(&cfg), Err(Error::Config(_))));
        assert!(build_plant(&PlantConfig::default().with_mesh(1, 1)).is_err());
    }
}
