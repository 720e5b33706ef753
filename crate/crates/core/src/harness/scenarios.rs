use rayon::prelude::*;

use super::config::StudyConfig;
use super::flow::make_proportional_flow;
use super::metrics::{cov, metric_errors, metric_errors_until, std_dev};
use super::report::{CaseReport, Signals, StudyReport};
use crate::error::Result;
use crate::lpv::{build_lpv_grid, simulate_lpv, LpvAxes, LpvGrid};
use crate::plant::{build_plant, simulate_plant, PlantModel, PlantRun};
use crate::profile::{DriveProfiles, Profile};
use crate::rom::simulate_lti;
use crate::trajectory::SimulationResult;
use crate::units::celsius_to_kelvin;

use super::config::HEAT_ONLY_Q_AXIS;

fn q_label(q: f64) -> String {
    format!("{q:e}").replace('+', "")
}

/// Plant run on the validation profile, shared by the LTI and LPV studies.
struct ValidationSetup {
    plant: PlantModel,
    heat: Profile,
    plant_run: PlantRun,
    axes: LpvAxes,
}

fn validation_setup(cfg: &StudyConfig) -> Result<ValidationSetup> {
    cfg.validate()?;
    let v = &cfg.validation;
    let plant = build_plant(&cfg.plant)?;
    let heat = cfg.validation_heat();
    let drive = DriveProfiles {
        q_gen: heat.clone(),
        m_dot: Profile::constant(v.m_dot),
        t_in: Profile::constant(celsius_to_kelvin(v.t_in_c)),
    };
    let plant_run = simulate_plant(&plant, &drive, v.t_end, cfg.dt)?;
    let axes = LpvAxes::new(HEAT_ONLY_Q_AXIS.to_vec(), vec![v.m_dot], vec![v.t_in_c])?;
    Ok(ValidationSetup {
        plant,
        heat,
        plant_run,
        axes,
    })
}

fn base_report(study: &str, cfg: &StudyConfig, setup_plant: &PlantModel) -> StudyReport {
    let mut report = StudyReport::new(study);
    report.provenance.insert("study_config".into(), cfg.hash());
    report
        .provenance
        .insert("plant_config".into(), setup_plant.config().hash());
    report
}

fn plant_case(run: &PlantRun) -> CaseReport {
    let mut case = CaseReport::new("plant", run.trajectory.clone());
    case.metrics
        .extra
        .insert("energy_imbalance".into(), run.energy.relative_imbalance());
    case
}

/// Samples with `t <= window`, excluding `t = 0`, and each step's change.
fn early_steps(traj: &SimulationResult, window: f64) -> impl Iterator<Item = f64> + '_ {
    traj.t
        .windows(2)
        .zip(traj.t_avg.windows(2))
        .take_while(move |(t, _)| t[1] <= window + 1e-9)
        .map(|(_, y)| y[1] - y[0])
}

fn strictly_decreasing(traj: &SimulationResult, window: f64) -> bool {
    let mut any = false;
    early_steps(traj, window).all(|d| {
        any = true;
        d < 0.0
    }) && any
}

fn nondecreasing(traj: &SimulationResult, window: f64) -> bool {
    early_steps(traj, window).all(|d| d >= 0.0)
}

/// Runs the validation profile through the plant and through one LTI model
/// per heat-generation vertex, each identified on its own. Flags whether the
/// high-heat model gets the sign of the early slope wrong.
pub fn scenario_lti_failure(cfg: &StudyConfig) -> Result<StudyReport> {
    let setup = validation_setup(cfg)?;
    let v = &cfg.validation;
    let grid = build_lpv_grid(
        &setup.plant,
        &setup.axes,
        &cfg.grid_options(v.extraction_t_end, false),
    )?;
    let mut report = base_report("lti-failure", cfg, &setup.plant);
    report.provenance.insert("lti_models".into(), grid.hash());

    let plant_traj = &setup.plant_run.trajectory;
    let window = v.early_window_s;
    let cases = (0..setup.axes.q_gen.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, CaseReport)> {
            let model = grid.vertex([i, 0, 0]);
            let q = setup.axes.q_gen[i];
            let traj = simulate_lti(model, &setup.heat, model.t0_temperature, v.t_end, cfg.dt)?;
            let full = metric_errors(&traj, plant_traj)?;
            let early = metric_errors_until(&traj, plant_traj, window)?;
            let mut case = CaseReport::new(format!("lti_q{}", q_label(q)), traj);
            case.metrics.max_abs_error_k = Some(full.max_abs_error_k);
            case.metrics.max_rel_error_pct = Some(full.max_rel_error_pct);
            case.metrics
                .extra
                .insert("early_max_abs_error_k".into(), early.max_abs_error_k);
            case.metrics.extra.insert("vertex_q_gen".into(), q);
            case.metrics.extra.insert("fit_rms".into(), model.fit_rms);
            Ok((q, case))
        })
        .collect::<Result<Vec<_>>>()?;

    let plant_down = strictly_decreasing(plant_traj, window);
    let check = cases
        .iter()
        .min_by(|a, b| {
            (a.0 - v.sign_check_q)
                .abs()
                .total_cmp(&(b.0 - v.sign_check_q).abs())
        })
        .expect("grid has vertices");
    let lti_up = nondecreasing(&check.1.trajectory, window);
    let early = |c: &CaseReport| c.metrics.extra["early_max_abs_error_k"];
    let best_early = cases
        .iter()
        .min_by(|a, b| early(&a.1).total_cmp(&early(&b.1)))
        .expect("grid has vertices");
    let low_best = cases
        .iter()
        .filter(|c| c.0 < check.0)
        .map(|c| early(&c.1))
        .fold(f64::INFINITY, f64::min);
    let high_best = cases
        .iter()
        .filter(|c| c.0 >= check.0)
        .map(|c| early(&c.1))
        .fold(f64::INFINITY, f64::min);

    report
        .flags
        .insert("plant_strictly_decreasing_early".into(), plant_down);
    report.flags.insert(
        format!("lti_q{}_nondecreasing_early", q_label(check.0)),
        lti_up,
    );
    report
        .flags
        .insert("sign_disagreement".into(), plant_down && lti_up);
    report.flags.insert(
        "low_q_tracks_early_cooling_better".into(),
        low_best < high_best,
    );
    report
        .summary
        .insert("best_early_vertex_q_gen".into(), best_early.0);
    report.summary.insert("early_window_s".into(), window);
    report.summary.insert(
        "max_lti_abs_error_k".into(),
        cases
            .iter()
            .map(|c| c.1.metrics.max_abs_error_k.unwrap())
            .fold(0.0, f64::max),
    );
    report.summary.insert(
        "min_lti_abs_error_k".into(),
        cases
            .iter()
            .map(|c| c.1.metrics.max_abs_error_k.unwrap())
            .fold(f64::INFINITY, f64::min),
    );
    if plant_down && lti_up {
        report.notes.push(format!(
            "sign disagreement: the plant cools during the first {window} s while the LTI model identified at {} W/m3 heats",
            q_label(check.0)
        ));
    }
    report.cases.push(plant_case(&setup.plant_run));
    report.cases.extend(cases.into_iter().map(|c| c.1));
    report.validate()?;
    Ok(report)
}

/// Runs the same scenario through the heat-scheduled LPV model.
pub fn scenario_lpv_validation(cfg: &StudyConfig) -> Result<StudyReport> {
    let setup = validation_setup(cfg)?;
    let v = &cfg.validation;
    let grid = build_lpv_grid(
        &setup.plant,
        &setup.axes,
        &cfg.grid_options(v.extraction_t_end, cfg.shared_time_constants),
    )?;
    let mut report = base_report("lpv-validation", cfg, &setup.plant);
    report.provenance.insert("lpv_grid".into(), grid.hash());

    let drive = DriveProfiles {
        q_gen: setup.heat.clone(),
        m_dot: Profile::constant(v.m_dot),
        t_in: Profile::constant(celsius_to_kelvin(v.t_in_c)),
    };
    let run = simulate_lpv(&grid, &drive, v.t_end, cfg.dt)?;
    let err = metric_errors(&run.trajectory, &setup.plant_run.trajectory)?;
    let mut case = CaseReport::new("lpv", run.trajectory);
    case.metrics.max_abs_error_k = Some(err.max_abs_error_k);
    case.metrics.max_rel_error_pct = Some(err.max_rel_error_pct);
    case.metrics.clamp_count = Some(run.clamp_count);

    report
        .summary
        .insert("max_abs_error_k".into(), err.max_abs_error_k);
    report
        .summary
        .insert("max_rel_error_pct".into(), err.max_rel_error_pct);
    report
        .summary
        .insert("clamp_count".into(), run.clamp_count as f64);
    report
        .summary
        .insert("tolerance_pct".into(), v.tolerance_pct);
    report.flags.insert(
        "within_tolerance".into(),
        err.max_rel_error_pct < v.tolerance_pct,
    );
    if run.clamp_count > 0 {
        report.notes.push(format!(
            "{} steps were clamped into the grid",
            run.clamp_count
        ));
    }
    report.cases.push(plant_case(&setup.plant_run));
    report.cases.push(case);
    report.validate()?;
    Ok(report)
}

/// Builds the full three-parameter grid used by the flow study.
pub fn flow_study_grid(cfg: &StudyConfig, plant: &PlantModel) -> Result<LpvGrid> {
    build_lpv_grid(
        plant,
        &LpvAxes::three_parameter(),
        &cfg.grid_options(cfg.flow.grid_t_end, cfg.shared_time_constants),
    )
}

/// Drives the three-parameter LPV model with one heat profile and one flow
/// profile per target CoV, and reports the spread of the average temperature.
pub fn scenario_flow_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let plant = build_plant(&cfg.plant)?;
    let grid = flow_study_grid(cfg, &plant)?;
    scenario_flow_study_with(cfg, &plant, &grid)
}

/// [`scenario_flow_study`] with a prebuilt grid.
pub fn scenario_flow_study_with(
    cfg: &StudyConfig,
    plant: &PlantModel,
    grid: &LpvGrid,
) -> Result<StudyReport> {
    let f = &cfg.flow;
    let heat = cfg.flow_heat();
    let t_in = Profile::constant(celsius_to_kelvin(f.t_in_c));
    let mut report = base_report("flow", cfg, plant);
    report.provenance.insert("lpv_grid".into(), grid.hash());

    let cases = f
        .target_covs_pct
        .par_iter()
        .enumerate()
        .map(|(i, &target)| -> Result<CaseReport> {
            let flow = make_proportional_flow(&heat, f.t_end, f.mean_flow, target)?;
            let drive = DriveProfiles {
                q_gen: heat.clone(),
                m_dot: flow.clone(),
                t_in: t_in.clone(),
            };
            let run = simulate_lpv(grid, &drive, f.t_end, cfg.dt)?;
            let traj = run.trajectory;
            let steps = traj.len() - 1;
            let flow_samples: Vec<f64> = (0..steps)
                .map(|k| flow.value_at(k as f64 * cfg.dt))
                .collect();
            let spread = |tr: &SimulationResult| -> Result<f64> {
                let kept: Vec<f64> =
                    tr.t.iter()
                        .zip(&tr.t_avg)
                        .filter(|(t, _)| **t >= f.warmup_s)
                        .map(|(_, y)| *y)
                        .collect();
                std_dev(&kept)
            };

            let mut signals = Signals::new(&["t_s", "q_gen_W_m3", "m_dot_kg_s"]);
            for k in 0..steps {
                let t = k as f64 * cfg.dt;
                signals.push(vec![t, heat.value_at(t), flow_samples[k]]);
            }
            let mut case = CaseReport::new(format!("case{}", i + 1), traj);
            case.metrics.temp_std_k = Some(spread(&case.trajectory)?);
            case.metrics.flow_cov_pct = Some(cov(&flow_samples)?);
            case.metrics.flow_mean_kg_s = Some(flow_samples.iter().sum::<f64>() / steps as f64);
            case.metrics.clamp_count = Some(run.clamp_count);
            case.metrics.extra.insert("target_cov_pct".into(), target);
            if f.run_plant {
                let reference = simulate_plant(plant, &drive, f.t_end, cfg.dt)?;
                let err = metric_errors(&case.trajectory, &reference.trajectory)?;
                case.metrics.max_abs_error_k = Some(err.max_abs_error_k);
                case.metrics.max_rel_error_pct = Some(err.max_rel_error_pct);
                case.metrics
                    .extra
                    .insert("plant_temp_std_k".into(), spread(&reference.trajectory)?);
                case.metrics.extra.insert(
                    "plant_energy_imbalance".into(),
                    reference.energy.relative_imbalance(),
                );
            }
            Ok(case.with_signals(signals))
        })
        .collect::<Result<Vec<_>>>()?;

    let stds: Vec<f64> = cases
        .iter()
        .map(|c| c.metrics.temp_std_k.unwrap())
        .collect();
    report.flags.insert(
        "temp_std_nonincreasing".into(),
        stds.windows(2).all(|w| w[1] <= w[0]),
    );
    if let (Some(first), Some(last)) = (stds.first(), stds.last()) {
        report
            .flags
            .insert("last_case_below_first".into(), last < first);
    }
    report.flags.insert(
        "flow_targets_met".into(),
        cases.iter().all(|c| {
            (c.metrics.flow_cov_pct.unwrap() - c.metrics.extra["target_cov_pct"]).abs() <= 0.1
                && (c.metrics.flow_mean_kg_s.unwrap() - f.mean_flow).abs() <= 1e-9
        }),
    );
    report.summary.insert("warmup_s".into(), f.warmup_s);
    let clamps: usize = cases.iter().map(|c| c.metrics.clamp_count.unwrap()).sum();
    if clamps > 0 {
        report
            .notes
            .push(format!("{clamps} steps were clamped into the grid"));
    }
    report.cases = cases;
    report.validate()?;
    Ok(report)
}
