use super::config::StudyConfig;
use super::metrics::metric_errors;
use super::report::{CaseReport, Signals, StudyReport};
use crate::ecm::{entropy_coeff, heat_generation, ocv, step_ecm, EcmParams, EcmState};
use crate::error::Result;
use crate::lpv::{build_lpv_grid, step_lpv, LpvAxes, LpvGrid, LpvState};
use crate::plant::{build_plant, PlantModel, PlantSimulator, SchedulePoint};
use crate::profile::{step_count, Profile};
use crate::trajectory::SimulationResult;
use crate::units::celsius_to_kelvin;

/// Electrical side of the closed loop. Each call advances the ECM by one
/// step at the last exchanged temperature and returns the schedule for the
/// thermal step. Temperature and heat are exchanged every `every` steps
/// and held in between.
struct EcmDriver<'a> {
    params: &'a EcmParams,
    current: &'a Profile,
    state: EcmState,
    m_dot: f64,
    t_in: f64,
    cell_volume: f64,
    every: usize,
    step: usize,
    held_q: f64,
    saturated_steps: usize,
    signals: Signals,
}

impl<'a> EcmDriver<'a> {
    fn new(params: &'a EcmParams, cfg: &'a StudyConfig, t0: f64) -> Self {
        let c = &cfg.coupled;
        Self {
            params,
            current: &c.current,
            state: EcmState::new(c.soc0, t0),
            m_dot: c.m_dot,
            t_in: celsius_to_kelvin(c.t_in_c),
            cell_volume: params.cell_volume,
            every: c.exchange_every,
            step: 0,
            held_q: 0.0,
            saturated_steps: 0,
            signals: Signals::new(&[
                "t_s",
                "current_A",
                "soc",
                "voltage_V",
                "q_gen_W_m3",
                "T_ecm_K",
            ]),
        }
    }

    fn next(&mut self, t: f64, t_avg: f64, dt: f64) -> Result<SchedulePoint> {
        let exchange = self.step.is_multiple_of(self.every);
        if exchange {
            self.state.temperature = t_avg;
        }
        let current = self.current.value_at(t);
        let out = step_ecm(self.params, &self.state, current, dt)?;
        self.saturated_steps += usize::from(out.saturated);
        self.state = out.state;
        let soc = out.state.soc;
        let q = heat_generation(
            current,
            ocv(self.params, soc)?,
            out.terminal_voltage,
            self.state.temperature,
            entropy_coeff(self.params, soc)?,
            self.cell_volume,
        )?;
        if exchange {
            self.held_q = q;
        }
        self.signals.push(vec![
            t,
            current,
            soc,
            out.terminal_voltage,
            self.held_q,
            self.state.temperature,
        ]);
        self.step += 1;
        Ok(SchedulePoint::new(self.held_q, self.m_dot, self.t_in))
    }
}

/// Which thermal model closes the loop.
pub enum ThermalBackend<'a> {
    Plant(&'a PlantModel),
    Lpv(&'a LpvGrid),
}

/// Outcome of one closed-loop run.
pub struct CoupledRun {
    pub trajectory: SimulationResult,
    pub signals: Signals,
    pub saturated_steps: usize,
    pub clamp_count: usize,
    /// Relative energy imbalance of the plant backend.
    pub energy_imbalance: Option<f64>,
}

/// Runs the ECM against one thermal backend. SOC saturation is counted and
/// the run continues.
pub fn run_coupled(
    cfg: &StudyConfig,
    params: &EcmParams,
    backend: ThermalBackend<'_>,
) -> Result<CoupledRun> {
    let c = &cfg.coupled;
    let dt = cfg.dt;
    match backend {
        ThermalBackend::Plant(model) => {
            let initial = model.initial_state(celsius_to_kelvin(c.t_in_c));
            let mut driver = EcmDriver::new(params, cfg, model.cell_average(&initial));
            let run = PlantSimulator::new(model)
                .run_with(&initial, c.t_end, dt, |t, t_avg| driver.next(t, t_avg, dt))?;
            Ok(CoupledRun {
                trajectory: run.trajectory,
                saturated_steps: driver.saturated_steps,
                signals: driver.signals,
                clamp_count: 0,
                energy_imbalance: Some(run.energy.relative_imbalance()),
            })
        }
        ThermalBackend::Lpv(grid) => {
            let steps = step_count(c.t_end, dt)?;
            let mut state = LpvState::rest(grid);
            let mut driver = EcmDriver::new(params, cfg, state.t_avg(grid));
            let mut t = vec![0.0];
            let mut t_avg = vec![state.t_avg(grid)];
            let mut clamp_count = 0;
            for k in 0..steps {
                let p = driver.next(k as f64 * dt, *t_avg.last().expect("sample"), dt)?;
                let (temp, clamped) = step_lpv(grid, &mut state, &p, dt)?;
                clamp_count += usize::from(clamped);
                t.push((k + 1) as f64 * dt);
                t_avg.push(temp);
            }
            Ok(CoupledRun {
                trajectory: SimulationResult {
                    t,
                    t_avg,
                    t_max: None,
                    t_out: None,
                },
                saturated_steps: driver.saturated_steps,
                signals: driver.signals,
                clamp_count,
                energy_imbalance: None,
            })
        }
    }
}

/// Closed-loop electro-thermal run, once with the plant and once with a
/// heat-scheduled LPV model at the configured flow and inlet temperature.
pub fn run_ecm_coupled(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let c = &cfg.coupled;
    let params = c.ecm.clone().unwrap_or_else(EcmParams::default_synthetic);
    params.validate()?;
    let plant = build_plant(&cfg.plant)?;
    let axes = LpvAxes::new(c.q_axis.clone(), vec![c.m_dot], vec![c.t_in_c])?;
    let grid = build_lpv_grid(
        &plant,
        &axes,
        &cfg.grid_options(c.extraction_t_end, cfg.shared_time_constants),
    )?;

    let reference = run_coupled(cfg, &params, ThermalBackend::Plant(&plant))?;
    let lpv = run_coupled(cfg, &params, ThermalBackend::Lpv(&grid))?;
    let err = metric_errors(&lpv.trajectory, &reference.trajectory)?;

    let mut report = StudyReport::new("ecm-coupled");
    report.provenance.insert("study_config".into(), cfg.hash());
    report
        .provenance
        .insert("plant_config".into(), plant.config().hash());
    report.provenance.insert("lpv_grid".into(), grid.hash());
    report
        .provenance
        .insert("ecm_params".into(), crate::hash_json(&params));

    let mut plant_case = CaseReport::new("coupled_plant", reference.trajectory);
    plant_case
        .metrics
        .extra
        .insert("saturated_steps".into(), reference.saturated_steps as f64);
    if let Some(e) = reference.energy_imbalance {
        plant_case
            .metrics
            .extra
            .insert("energy_imbalance".into(), e);
    }
    let mut lpv_case = CaseReport::new("coupled_lpv", lpv.trajectory);
    lpv_case.metrics.max_abs_error_k = Some(err.max_abs_error_k);
    lpv_case.metrics.max_rel_error_pct = Some(err.max_rel_error_pct);
    lpv_case.metrics.clamp_count = Some(lpv.clamp_count);
    lpv_case
        .metrics
        .extra
        .insert("saturated_steps".into(), lpv.saturated_steps as f64);

    report
        .summary
        .insert("max_abs_error_k".into(), err.max_abs_error_k);
    report
        .summary
        .insert("max_rel_error_pct".into(), err.max_rel_error_pct);
    report.flags.insert(
        "lpv_matches_plant".into(),
        err.max_rel_error_pct < c.tolerance_pct,
    );
    for (name, steps) in [
        ("plant", reference.saturated_steps),
        ("lpv", lpv.saturated_steps),
    ] {
        if steps > 0 {
            report
                .notes
                .push(format!("{name}: SOC saturated on {steps} steps"));
        }
    }
    if lpv.clamp_count > 0 {
        report.notes.push(format!(
            "lpv: {} steps scheduled outside the grid were clamped",
            lpv.clamp_count
        ));
    }
    report
        .cases
        .push(plant_case.with_signals(reference.signals));
    report.cases.push(lpv_case.with_signals(lpv.signals));
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> StudyConfig {
        let mut cfg = StudyConfig::default();
        cfg.plant = cfg.plant.with_mesh(10, 2);
        cfg.dt = 1.0;
        cfg.coupled.t_end = 300.0;
        cfg
    }

    #[test]
    fn zero_current_relaxes_toward_the_inlet() {
        let mut cfg = quick_config();
        cfg.coupled.current = Profile::constant(0.0);
        cfg.coupled.t_in_c = 10.0;
        let plant = build_plant(&cfg.plant).unwrap();
        let params = EcmParams::default_synthetic();
        let run = run_coupled(&cfg, &params, ThermalBackend::Plant(&plant)).unwrap();
        assert!(run
            .signals
            .column("q_gen_W_m3")
            .unwrap()
            .iter()
            .all(|&q| q == 0.0));
        let t = &run.trajectory.t_avg;
        let inlet = celsius_to_kelvin(10.0);
        assert!(t.windows(2).all(|w| w[1] <= w[0] && w[1] > inlet));
        assert!(t.last().unwrap() - inlet < 0.5 * (t[0] - inlet));
    }

    #[test]
    fn constant_discharge_ramps_soc_linearly_and_heats() {
        let cfg = quick_config();
        let plant = build_plant(&cfg.plant).unwrap();
        let params = EcmParams::default_synthetic();
        let run = run_coupled(&cfg, &params, ThermalBackend::Plant(&plant)).unwrap();
        let soc = run.signals.column("soc").unwrap();
        let rate = 45.0 * cfg.dt / (3600.0 * params.capacity);
        for w in soc.windows(2) {
            assert!((w[0] - w[1] - rate).abs() < 1e-12);
        }
        assert!(run
            .signals
            .column("q_gen_W_m3")
            .unwrap()
            .iter()
            .all(|&q| q > 0.0));
        assert!(run.trajectory.final_t_avg().unwrap() > run.trajectory.t_avg[0]);
        assert_eq!(run.saturated_steps, 0);
    }

    #[test]
    fn saturation_is_counted_and_the_run_continues() {
        let mut cfg = quick_config();
        cfg.coupled.soc0 = 0.01;
        let plant = build_plant(&cfg.plant).unwrap();
        let params = EcmParams::default_synthetic();
        let run = run_coupled(&cfg, &params, ThermalBackend::Plant(&plant)).unwrap();
        assert!(run.saturated_steps > 0);
        assert_eq!(run.trajectory.len(), 301);
    }

    #[test]
    fn looser_exchange_holds_heat_between_exchanges() {
        let mut cfg = quick_config();
        cfg.coupled.exchange_every = 10;
        let plant = build_plant(&cfg.plant).unwrap();
        let params = EcmParams::default_synthetic();
        let run = run_coupled(&cfg, &params, ThermalBackend::Plant(&plant)).unwrap();
        let q = run.signals.column("q_gen_W_m3").unwrap();
        assert!(q[..10].iter().all(|&x| x == q[0]));
        assert_ne!(q[10], q[0]);
    }
}
