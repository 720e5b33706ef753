use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{PlantModel, SchedulePoint};
use crate::rom::{extract_step_response, FitOptions, FosterLtiModel, StepResponse};
use crate::units::{celsius_to_kelvin, kelvin_to_celsius};

/// Version written to, and required from, grid files.
pub const GRID_FORMAT_VERSION: u32 = 1;

/// Coordinate in which interpolation weights along an axis are linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMetric {
    Linear,
    Log,
    /// Weights linear in `1/x`. Along the heat-generation axis this makes
    /// gains of the form `a + b/q̇` interpolate exactly, which is the shape
    /// the cooling transient gives the normalised step response. Along the
    /// flow axis it follows the coolant temperature rise, which scales
    /// with `1/ṁ`.
    Reciprocal,
}

impl AxisMetric {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Log => x.ln(),
            Self::Reciprocal => 1.0 / x,
        }
    }

    fn requires_positive(self) -> bool {
        !matches!(self, Self::Linear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisMetrics {
    pub q_gen: AxisMetric,
    pub m_dot: AxisMetric,
    pub t_in: AxisMetric,
}

impl Default for AxisMetrics {
    fn default() -> Self {
        Self {
            q_gen: AxisMetric::Reciprocal,
            m_dot: AxisMetric::Reciprocal,
            t_in: AxisMetric::Linear,
        }
    }
}

/// Scheduling axes. Inlet temperatures are given in °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvAxes {
    pub q_gen: Vec<f64>,
    pub m_dot: Vec<f64>,
    pub t_in_c: Vec<f64>,
}

impl LpvAxes {
    pub fn new(q_gen: Vec<f64>, m_dot: Vec<f64>, t_in_c: Vec<f64>) -> Result<Self> {
        let axes = Self {
            q_gen,
            m_dot,
            t_in_c,
        };
        axes.validate(&AxisMetrics::default())?;
        Ok(axes)
    }

    /// Three heat levels, five flow rates and four inlet temperatures.
    pub fn three_parameter() -> Self {
        Self {
            q_gen: vec![1e5, 5e5, 5e6],
            m_dot: vec![2e-4, 5e-4, 1e-3, 2e-3, 3e-3],
            t_in_c: vec![5.0, 10.0, 15.0, 20.0],
        }
    }

    /// Seven heat levels at 2 g/s and 5 °C inlet.
    pub fn heat_only() -> Self {
        Self {
            q_gen: vec![8e4, 1e5, 5e5, 1e6, 5e6, 1e7, 5e7],
            m_dot: vec![2e-3],
            t_in_c: vec![5.0],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.q_gen.len(), self.m_dot.len(), self.t_in_c.len()]
    }

    pub fn vertex_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Axis indices of flat vertex `index` (heat-major order).
    pub fn unflatten(&self, index: usize) -> [usize; 3] {
        let [_, nm, nt] = self.shape();
        [index / (nm * nt), (index / nt) % nm, index % nt]
    }

    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        let [_, nm, nt] = self.shape();
        (idx[0] * nm + idx[1]) * nt + idx[2]
    }

    pub fn point(&self, idx: [usize; 3]) -> SchedulePoint {
        SchedulePoint::with_celsius_inlet(
            self.q_gen[idx[0]],
            self.m_dot[idx[1]],
            self.t_in_c[idx[2]],
        )
    }

    pub fn validate(&self, metrics: &AxisMetrics) -> Result<()> {
        for (name, axis, metric) in [
            ("q_gen", &self.q_gen, metrics.q_gen),
            ("m_dot", &self.m_dot, metrics.m_dot),
            ("t_in", &self.t_in_c, metrics.t_in),
        ] {
            if axis.is_empty() {
                return Err(Error::Config(format!("{name} axis is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} axis has non-finite values")));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "{name} axis must be strictly increasing"
                )));
            }
            if metric.requires_positive() && axis[0] <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} axis must be positive for a {metric:?} metric"
                )));
            }
        }
        if self.m_dot[0] < 0.0 {
            return Err(Error::Config("m_dot axis must be >= 0".into()));
        }
        if self.t_in_c[0] <= -crate::units::ZERO_CELSIUS_K {
            return Err(Error::Config("t_in axis below absolute zero".into()));
        }
        Ok(())
    }
}

/// How the vertex models were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProvenance {
    pub plant_config_hash: String,
    pub t_end_s: f64,
    pub dt_s: f64,
    pub order: usize,
    pub fit_seed: Option<u64>,
}

/// Settings for [`build_lpv_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridBuildOptions {
    pub order: usize,
    pub t_end: f64,
    pub dt: f64,
    pub fit: FitOptions,
    /// Refits with perturbed starting points when a vertex loses order.
    pub refit_attempts: usize,
    pub metrics: AxisMetrics,
    /// Fit all vertices that share a flow rate with one set of time
    /// constants. At fixed flow the plant is linear, so those vertices
    /// differ only in their residues; sharing the modes keeps the rank-wise
    /// mode pairing meaningful. When false every vertex is fitted alone.
    pub shared_time_constants: bool,
}

impl Default for GridBuildOptions {
    fn default() -> Self {
        Self {
            order: 4,
            t_end: 8000.0,
            dt: 0.5,
            fit: FitOptions::default(),
            refit_attempts: 4,
            metrics: AxisMetrics::default(),
            shared_time_constants: true,
        }
    }
}

/// Tensor of vertex models over `(q̇, ṁ, T_in)` plus interpolation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvGrid {
    axes: LpvAxes,
    /// Inlet axis in K.
    t_axis_k: Vec<f64>,
    metrics: AxisMetrics,
    order: usize,
    vertices: Vec<FosterLtiModel>,
    t0_temperature: f64,
    provenance: GridProvenance,
}

impl LpvGrid {
    pub fn new(
        axes: LpvAxes,
        metrics: AxisMetrics,
        vertices: Vec<FosterLtiModel>,
        provenance: GridProvenance,
    ) -> Result<Self> {
        axes.validate(&metrics)?;
        if vertices.len() != axes.vertex_count() {
            return Err(Error::Config(format!(
                "grid needs {} vertices, got {}",
                axes.vertex_count(),
                vertices.len()
            )));
        }
        let order = vertices[0].order;
        let t0_temperature = vertices[0].t0_temperature;
        for (i, v) in vertices.iter().enumerate() {
            v.validate()?;
            let idx = axes.unflatten(i);
            if v.order != order {
                return Err(Error::Config(format!(
                    "vertex {idx:?} has order {} instead of {order}",
                    v.order
                )));
            }
            if v.t0_temperature != t0_temperature {
                return Err(Error::Config(format!(
                    "vertex {idx:?} has a different initial temperature"
                )));
            }
            let expected = axes.point(idx);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
            if !(close(v.op.q_gen, expected.q_gen)
                && close(v.op.m_dot, expected.m_dot)
                && close(v.op.t_in, expected.t_in))
            {
                return Err(Error::Config(format!(
                    "vertex {idx:?} operating point does not match the axes"
                )));
            }
        }
        Ok(Self {
            t_axis_k: axes.t_in_c.iter().map(|&c| celsius_to_kelvin(c)).collect(),
            axes,
            metrics,
            order,
            vertices,
            t0_temperature,
            provenance,
        })
    }

    pub fn axes(&self) -> &LpvAxes {
        &self.axes
    }

    pub(crate) fn t_axis_k(&self) -> &[f64] {
        &self.t_axis_k
    }

    pub fn metrics(&self) -> AxisMetrics {
        self.metrics
    }

    pub fn with_metrics(mut self, metrics: AxisMetrics) -> Result<Self> {
        self.axes.validate(&metrics)?;
        self.metrics = metrics;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn t0_temperature(&self) -> f64 {
        self.t0_temperature
    }

    pub fn provenance(&self) -> &GridProvenance {
        &self.provenance
    }

    pub fn vertices(&self) -> &[FosterLtiModel] {
        &self.vertices
    }

    pub fn vertex(&self, idx: [usize; 3]) -> &FosterLtiModel {
        &self.vertices[self.axes.flatten(idx)]
    }

    /// Single-vertex grid wrapping one LTI model.
    pub fn from_single(model: FosterLtiModel, provenance: GridProvenance) -> Result<Self> {
        let axes = LpvAxes {
            q_gen: vec![model.op.q_gen],
            m_dot: vec![model.op.m_dot],
            t_in_c: vec![kelvin_to_celsius(model.op.t_in)],
        };
        Self::new(axes, AxisMetrics::default(), vec![model], provenance)
    }

    pub fn hash(&self) -> String {
        crate::hash_json(&GridFile::from(self))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GridFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    format_version: u32,
    axes: LpvAxes,
    metrics: AxisMetrics,
    order: usize,
    t0_temperature_k: f64,
    provenance: GridProvenance,
    vertices: Vec<VertexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexEntry {
    index: [usize; 3],
    gains: Vec<f64>,
    taus: Vec<f64>,
    fit_rms: f64,
}

impl From<&LpvGrid> for GridFile {
    fn from(g: &LpvGrid) -> Self {
        Self {
            format_version: GRID_FORMAT_VERSION,
            axes: g.axes.clone(),
            metrics: g.metrics,
            order: g.order,
            t0_temperature_k: g.t0_temperature,
            provenance: g.provenance.clone(),
            vertices: g
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| VertexEntry {
                    index: g.axes.unflatten(i),
                    gains: v.gains.clone(),
                    taus: v.taus.clone(),
                    fit_rms: v.fit_rms,
                })
                .collect(),
        }
    }
}

impl TryFrom<GridFile> for LpvGrid {
    type Error = Error;

    fn try_from(f: GridFile) -> Result<Self> {
        if f.format_version != GRID_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "grid format version {} is not supported (expected {GRID_FORMAT_VERSION})",
                f.format_version
            )));
        }
        f.axes.validate(&f.metrics)?;
        let mut slots: Vec<Option<FosterLtiModel>> = vec![None; f.axes.vertex_count()];
        for v in f.vertices {
            let [iq, im, it] = v.index;
            let shape = f.axes.shape();
            if iq >= shape[0] || im >= shape[1] || it >= shape[2] {
                return Err(Error::Format(format!(
                    "vertex index {:?} outside the grid",
                    v.index
                )));
            }
            if v.gains.len() != f.order {
                return Err(Error::Format(format!(
                    "vertex {:?} has order {}",
                    v.index,
                    v.gains.len()
                )));
            }
            let slot = &mut slots[f.axes.flatten(v.index)];
            if slot.is_some() {
                return Err(Error::Format(format!("vertex {:?} listed twice", v.index)));
            }
            let model = FosterLtiModel {
                order: v.gains.len(),
                gains: v.gains,
                taus: v.taus,
                op: f.axes.point(v.index),
                t0_temperature: f.t0_temperature_k,
                fit_rms: v.fit_rms,
            };
            model
                .validate()
                .map_err(|e| Error::Format(format!("vertex {:?}: {e}", v.index)))?;
            *slot = Some(model);
        }
        let vertices = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| Error::Format(format!("vertex {:?} missing", f.axes.unflatten(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        LpvGrid::new(f.axes, f.metrics, vertices, f.provenance)
    }
}

/// Extracts one step response per vertex and fits Foster models, in
/// parallel. A fit that loses order is repeated from perturbed starting
/// points; the perturbation seed depends only on the vertex (or flow slice)
/// index, so the result does not depend on thread scheduling.
pub fn build_lpv_grid(
    plant: &PlantModel,
    axes: &LpvAxes,
    opts: &GridBuildOptions,
) -> Result<LpvGrid> {
    axes.validate(&opts.metrics)?;
    if opts.order == 0 {
        return Err(Error::Config("grid order must be >= 1".into()));
    }
    let responses = (0..axes.vertex_count())
        .into_par_iter()
        .map(|i| {
            let idx = axes.unflatten(i);
            extract_step_response(plant, axes.point(idx), opts.t_end, opts.dt).map_err(|e| {
                Error::Vertex {
                    vertex: idx,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let vertices = if opts.shared_time_constants {
        let [nq, nm, nt] = axes.shape();
        let slices = (0..nm)
            .into_par_iter()
            .map(|im| {
                let members: Vec<[usize; 3]> = (0..nq)
                    .flat_map(|iq| (0..nt).map(move |it| [iq, im, it]))
                    .collect();
                let resps: Vec<StepResponse> = members
                    .iter()
                    .map(|&idx| responses[axes.flatten(idx)].clone())
                    .collect();
                fit_with_retries(opts, im as u64, |fit| {
                    fit.fit_shared(&resps, opts.order).map(|f| f.models)
                })
                .map(|models| members.into_iter().zip(models).collect::<Vec<_>>())
                .map_err(|e| Error::Vertex {
                    vertex: [0, im, 0],
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut slots: Vec<Option<FosterLtiModel>> = vec![None; axes.vertex_count()];
        for (idx, model) in slices.into_iter().flatten() {
            slots[axes.flatten(idx)] = Some(model);
        }
        slots
            .into_iter()
            .map(|m| m.expect("every vertex fitted"))
            .collect()
    } else {
        responses
            .par_iter()
            .enumerate()
            .map(|(i, resp)| {
                fit_with_retries(opts, i as u64, |fit| {
                    fit.fit(resp, opts.order).map(|f| vec![f.model])
                })
                .map(|mut v| v.remove(0))
                .map_err(|e| Error::Vertex {
                    vertex: axes.unflatten(i),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let provenance = GridProvenance {
        plant_config_hash: plant.config().hash(),
        t_end_s: opts.t_end,
        dt_s: opts.dt,
        order: opts.order,
        fit_seed: opts.fit.seed,
    };
    LpvGrid::new(axes.clone(), opts.metrics, vertices, provenance)
}

fn fit_with_retries(
    opts: &GridBuildOptions,
    index: u64,
    fit: impl Fn(&FitOptions) -> Result<Vec<FosterLtiModel>>,
) -> Result<Vec<FosterLtiModel>> {
    let mut models = fit(&opts.fit)?;
    let base_seed = opts.fit.seed.unwrap_or(0);
    let mut attempt = 0;
    while models[0].order < opts.order {
        if attempt == opts.refit_attempts {
            return Err(Error::Numeric(format!(
                "fit keeps collapsing to order {} after {attempt} refits",
                models[0].order
            )));
        }
        attempt += 1;
        let retry = FitOptions {
            seed: Some(base_seed ^ (index << 8) ^ attempt as u64),
            ..opts.fit.clone()
        };
        models = fit(&retry)?;
    }
    Ok(models)
}
