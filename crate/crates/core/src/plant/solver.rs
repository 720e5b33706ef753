use super::banded::{BandLu, BandMatrix};
use super::config::{SchedulePoint, TimeScheme};
use super::model::{PlantModel, PlantState};
use crate::error::{ensure_finite, Error, Result};
use crate::profile::{step_count, DriveProfiles};
use crate::trajectory::SimulationResult;

/// Integrated energy terms of a plant run (J).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EnergyLedger {
    /// ∫ q̇·V_meshed dt.
    pub generated: f64,
    /// ∫ ṁ_meshed·C_p,w·(T_out − T_in) dt.
    pub advected_out: f64,
    /// Change in Σ C_i·T_i between the first and last sample.
    pub internal_change: f64,
}

impl EnergyLedger {
    /// `|generated − advected − ΔU|` relative to the largest of the three terms.
    pub fn relative_imbalance(&self) -> f64 {
        let scale = self
            .generated
            .abs()
            .max(self.advected_out.abs())
            .max(self.internal_change.abs());
        if scale == 0.0 {
            return 0.0;
        }
        (self.generated - self.advected_out - self.internal_change).abs() / scale
    }
}

/// Plant run output: the trajectory plus its energy bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantRun {
    pub trajectory: SimulationResult,
    pub energy: EnergyLedger,
    pub final_state: PlantState,
}

/// Operator `K(ṁ)`: link conductances plus upwind advection.
fn assemble_operator(model: &PlantModel, m_dot: f64) -> BandMatrix {
    let mut k = BandMatrix::zeros(model.node_count(), model.bandwidth);
    for l in &model.links {
        k.add(l.a, l.a, l.conductance);
        k.add(l.b, l.b, l.conductance);
        k.add(l.a, l.b, -l.conductance);
        k.add(l.b, l.a, -l.conductance);
    }
    let cp = model.config().materials.water.cp;
    for ch in &model.channels {
        let a = m_dot * ch.flow_fraction * cp;
        for (i, &node) in ch.nodes.iter().enumerate() {
            k.add(node, node, a);
            if i > 0 {
                k.add(node, ch.nodes[i - 1], -a);
            }
        }
    }
    k
}

/// Forcing vector: volumetric source plus the inlet advection term.
fn forcing(model: &PlantModel, p: &SchedulePoint, out: &mut [f64]) {
    for (f, v) in out.iter_mut().zip(&model.cell_volume) {
        *f = p.q_gen * v;
    }
    let cp = model.config().materials.water.cp;
    for ch in &model.channels {
        out[ch.nodes[0]] += p.m_dot * ch.flow_fraction * cp * p.t_in;
    }
}

fn stability_limit(model: &PlantModel, k: &BandMatrix) -> f64 {
    model
        .capacity
        .iter()
        .enumerate()
        .filter(|(i, _)| k.get(*i, *i) > 0.0)
        .map(|(i, c)| c / k.get(i, i))
        .fold(f64::INFINITY, f64::min)
}

/// Largest stable forward-Euler step for the given flow.
pub fn explicit_stability_limit(model: &PlantModel, m_dot: f64) -> f64 {
    stability_limit(model, &assemble_operator(model, m_dot))
}

enum Factor {
    Implicit(BandLu),
    Explicit { operator: BandMatrix, limit: f64 },
}

/// Stateful integrator. Caches the factorised system matrix for the last
/// `(ṁ, dt)` pair so constant-flow runs factorise once.
pub struct PlantSimulator<'a> {
    model: &'a PlantModel,
    cached: Option<((u64, u64), Factor)>,
    rhs: Vec<f64>,
    force: Vec<f64>,
}

impl<'a> PlantSimulator<'a> {
    pub fn new(model: &'a PlantModel) -> Self {
        let n = model.node_count();
        Self {
            model,
            cached: None,
            rhs: vec![0.0; n],
            force: vec![0.0; n],
        }
    }

    fn prepare(&mut self, m_dot: f64, dt: f64) -> Result<()> {
        let key = (m_dot.to_bits(), dt.to_bits());
        if matches!(&self.cached, Some((k, _)) if *k == key) {
            return Ok(());
        }
        let mut k = assemble_operator(self.model, m_dot);
        let factor = match self.model.config().scheme {
            TimeScheme::SemiImplicit => {
                for (i, c) in self.model.capacity.iter().enumerate() {
                    k.add(i, i, c / dt);
                }
                Factor::Implicit(
                    k.factorize()
                        .ok_or_else(|| Error::Numeric("plant system matrix is singular".into()))?,
                )
            }
            TimeScheme::Explicit => {
                let limit = stability_limit(self.model, &k);
                Factor::Explicit { operator: k, limit }
            }
        };
        self.cached = Some((key, factor));
        Ok(())
    }

    /// Advances the flat temperature vector by one step in place.
    pub(crate) fn step_flat(
        &mut self,
        temps: &mut [f64],
        p: &SchedulePoint,
        dt: f64,
    ) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt = {dt} must be > 0")));
        }
        p.validate()?;
        self.prepare(p.m_dot, dt)?;
        let model = self.model;
        forcing(model, p, &mut self.force);
        match &self.cached.as_ref().expect("prepared").1 {
            Factor::Implicit(lu) => {
                for i in 0..temps.len() {
                    self.rhs[i] = model.capacity[i] / dt * temps[i] + self.force[i];
                }
                lu.solve(&mut self.rhs);
                temps.copy_from_slice(&self.rhs);
            }
            Factor::Explicit { operator, limit } => {
                if dt > *limit {
                    return Err(Error::Stability { dt, max_dt: *limit });
                }
                operator.mul_vec(temps, &mut self.rhs);
                for i in 0..temps.len() {
                    temps[i] += dt / model.capacity[i] * (self.force[i] - self.rhs[i]);
                }
            }
        }
        if temps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(
                "plant temperatures became non-finite".into(),
            ));
        }
        Ok(())
    }

    pub fn step(&mut self, state: &PlantState, p: &SchedulePoint, dt: f64) -> Result<PlantState> {
        self.model.check_state_shape(state)?;
        let mut temps = self.model.to_flat(state);
        self.step_flat(&mut temps, p, dt)?;
        Ok(self.model.state_from_flat(&temps))
    }

    /// Runs from `state` over `[0, t_end]`, sampling every step.
    pub fn run(
        &mut self,
        state: &PlantState,
        profiles: &DriveProfiles,
        t_end: f64,
        dt: f64,
    ) -> Result<PlantRun> {
        self.run_with(state, t_end, dt, |t, _| Ok(profiles.at(t)))
    }

    /// Runs with the schedule produced by `schedule(t, T_avg)` at the start of
    /// each step, where `T_avg` is the current cell average.
    pub fn run_with(
        &mut self,
        state: &PlantState,
        t_end: f64,
        dt: f64,
        mut schedule: impl FnMut(f64, f64) -> Result<SchedulePoint>,
    ) -> Result<PlantRun> {
        let model = self.model;
        model.check_state_shape(state)?;
        state.validate()?;
        let steps = step_count(t_end, dt)?;
        let w_cp = model.config().materials.water.cp * model.meshed_flow_fraction();
        let v_mesh = model.meshed_cell_volume();
        let explicit = model.config().scheme == TimeScheme::Explicit;

        let mut t = Vec::with_capacity(steps + 1);
        let mut t_avg = Vec::with_capacity(steps + 1);
        let mut t_max = Vec::with_capacity(steps + 1);
        let mut t_out = Vec::with_capacity(steps + 1);
        let mut current = state.clone();
        t.push(0.0);
        t_avg.push(model.cell_average(&current));
        t_max.push(model.cell_max(&current));
        t_out.push(model.outlet_temperature(&current));

        let u0 = model.internal_energy(state);
        let mut ledger = EnergyLedger::default();
        let mut temps = model.to_flat(state);
        for k in 0..steps {
            let now = k as f64 * dt;
            let p = schedule(now, *t_avg.last().expect("sample"))?;
            let outlet_before = *t_out.last().expect("sample");
            self.step_flat(&mut temps, &p, dt)?;
            current = model.state_from_flat(&temps);
            let outlet = model.outlet_temperature(&current);
            // forward Euler advects the start-of-step outlet value
            let advected = if explicit { outlet_before } else { outlet };
            ledger.generated += p.q_gen * v_mesh * dt;
            ledger.advected_out += p.m_dot * w_cp * (advected - p.t_in) * dt;
            t.push((k + 1) as f64 * dt);
            t_avg.push(model.cell_average(&current));
            t_max.push(model.cell_max(&current));
            t_out.push(outlet);
        }
        ensure_finite("final cell temperature", *t_avg.last().expect("sample"))?;
        ledger.internal_change = model.internal_energy(&current) - u0;
        Ok(PlantRun {
            trajectory: SimulationResult {
                t,
                t_avg,
                t_max: Some(t_max),
                t_out: Some(t_out),
            },
            energy: ledger,
            final_state: current,
        })
    }
}

/// Advances the plant by one step. Builds a fresh factorisation; use
/// [`PlantSimulator`] for repeated steps.
pub fn step_plant(
    model: &PlantModel,
    state: &PlantState,
    p: &SchedulePoint,
    dt: f64,
) -> Result<PlantState> {
    PlantSimulator::new(model).step(state, p, dt)
}

/// Simulates from [`PlantModel::initial_state`] for the inlet temperature at `t = 0`.
pub fn simulate_plant(
    model: &PlantModel,
    profiles: &DriveProfiles,
    t_end: f64,
    dt: f64,
) -> Result<PlantRun> {
    let initial = model.initial_state(profiles.t_in.value_at(0.0));
    PlantSimulator::new(model).run(&initial, profiles, t_end, dt)
}
