use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cellrom::harness::{self, StudyConfig};
use cellrom::lpv::{build_lpv_grid, simulate_lpv, LpvAxes, LpvGrid};
use cellrom::plant::{build_plant, simulate_plant, SchedulePoint};
use cellrom::rom::{extract_step_response, simulate_lti, FosterLtiModel, StepResponse};
use cellrom::units::celsius_to_kelvin;
use cellrom::{DriveProfiles, Profile, SimulationResult};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cellrom",
    version,
    about = "Thermal reduced-order models of a liquid-cooled cell"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Study configuration (JSON). Omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Time step (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated horizon or step-response length (s).
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Seed for the perturbed fit restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Record a plant step response at one operating point.
    Extract(OperatingPoint),
    /// Fit a Foster model to a step-response CSV.
    Fit {
        response: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
    /// LPV grid operations.
    Grid {
        #[command(subcommand)]
        action: GridAction,
    },
    /// Simulate one model on a drive.
    Simulate(SimulateArgs),
    /// Error metrics of a reduced trajectory against a plant trajectory.
    Compare { rom: PathBuf, plant: PathBuf },
    /// Run one of the studies and write its report.
    Study { which: StudyKind },
}

#[derive(Args)]
struct OperatingPoint {
    /// Heat-generation step (W/m³).
    #[arg(long)]
    q: f64,
    /// Total coolant flow (kg/s).
    #[arg(long, default_value_t = 2e-3)]
    m_dot: f64,
    /// Inlet temperature (°C).
    #[arg(long, default_value_t = 5.0)]
    t_in_c: f64,
}

#[derive(Subcommand)]
enum GridAction {
    /// Extract and fit every vertex, then save the grid.
    Build {
        #[arg(long, value_enum, default_value_t = AxesKind::ThreeParameter)]
        axes: AxesKind,
        /// Fit each vertex on its own instead of sharing time constants per flow rate.
        #[arg(long)]
        per_vertex: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxesKind {
    /// 3 heat × 5 flow × 4 inlet vertices.
    ThreeParameter,
    /// 7 heat vertices at the validation flow and inlet temperature.
    HeatOnly,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Plant,
    Lti,
    Lpv,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Model file: Foster model JSON for `lti`, grid JSON for `lpv`.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Heat-generation CSV (`t_s,q_gen_W_m3`).
    #[arg(long, conflicts_with = "q")]
    heat: Option<PathBuf>,
    /// Constant heat generation (W/m³).
    #[arg(long)]
    q: Option<f64>,
    /// Flow CSV (`t_s,m_dot_kg_s`).
    #[arg(long, conflicts_with = "m_dot")]
    flow: Option<PathBuf>,
    /// Constant total coolant flow (kg/s).
    #[arg(long)]
    m_dot: Option<f64>,
    /// Constant inlet temperature (°C).
    #[arg(long)]
    t_in_c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    LtiFailure,
    LpvValidation,
    Flow,
    EcmCoupled,
}

fn load_config(g: &Global) -> Result<StudyConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            StudyConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => StudyConfig::default(),
    };
    if let Some(dt) = g.dt {
        cfg.dt = dt;
    }
    if g.seed.is_some() {
        cfg.fit.seed = g.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_file(g: &Global, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(g.out.join(name))
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    match cli.command {
        Command::Extract(op) => {
            let plant = build_plant(&cfg.plant)?;
            let point = SchedulePoint::with_celsius_inlet(op.q, op.m_dot, op.t_in_c);
            let t_end = g.t_end.unwrap_or(cfg.flow.grid_t_end);
            let resp = extract_step_response(&plant, point, t_end, cfg.dt)?;
            let path = out_file(g, "step_response.csv")?;
            resp.save_csv(&path)?;
            for w in &resp.warnings {
                eprintln!("warning: {w}");
            }
            print_json(serde_json::json!({
                "status": "ok",
                "file": path,
                "final_normalized": resp.final_normalized(),
                "settled": resp.is_settled(),
            }));
        }
        Command::Fit { response, order } => {
            let resp = StepResponse::load_csv(&response)
                .with_context(|| format!("reading {}", response.display()))?;
            let fit = cfg.fit.fit(&resp, order)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            let path = out_file(g, "model.json")?;
            fit.model.save_json(&path)?;
            print_json(serde_json::json!({
                "status": "ok",
                "file": path,
                "order": fit.model.order,
                "fit_rms": fit.model.fit_rms,
                "rel_fit_rms": fit.model.fit_rms / resp.final_normalized().abs(),
                "iterations": fit.iterations,
            }));
        }
        Command::Grid {
            action: GridAction::Build { axes, per_vertex },
        } => {
            let plant = build_plant(&cfg.plant)?;
            let (axes, default_t_end) = match axes {
                AxesKind::ThreeParameter => (LpvAxes::three_parameter(), cfg.flow.grid_t_end),
                AxesKind::HeatOnly => (
                    LpvAxes::new(
                        harness::HEAT_ONLY_Q_AXIS.to_vec(),
                        vec![cfg.validation.m_dot],
                        vec![cfg.validation.t_in_c],
                    )?,
                    cfg.validation.extraction_t_end,
                ),
            };
            let shared = cfg.shared_time_constants && !per_vertex;
            let opts = cfg.grid_options(g.t_end.unwrap_or(default_t_end), shared);
            let grid = build_lpv_grid(&plant, &axes, &opts)?;
            let path = out_file(g, "grid.json")?;
            grid.save(&path)?;
            let worst = grid
                .vertices()
                .iter()
                .map(|v| v.fit_rms / v.dc_gain().abs())
                .fold(0.0, f64::max);
            print_json(serde_json::json!({
                "status": "ok",
                "file": path,
                "vertices": grid.vertices().len(),
                "worst_rel_fit_rms": worst,
                "hash": grid.hash(),
            }));
        }
        Command::Simulate(args) => simulate(g, &cfg, args)?,
        Command::Compare { rom, plant } => {
            let read = |p: &Path| -> Result<SimulationResult> {
                let file =
                    std::fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(SimulationResult::read_csv(file)?)
            };
            let m = harness::metric_errors(&read(&rom)?, &read(&plant)?)?;
            let value = serde_json::json!({
                "status": "ok",
                "max_abs_error_k": m.max_abs_error_k,
                "max_rel_error_pct": m.max_rel_error_pct,
            });
            std::fs::write(out_file(g, "compare.json")?, format!("{value:#}\n"))?;
            print_json(value);
        }
        Command::Study { which } => {
            let mut cfg = cfg;
            let report = match which {
                StudyKind::LtiFailure | StudyKind::LpvValidation => {
                    if let Some(t) = g.t_end {
                        cfg.validation.t_end = t;
                    }
                    if matches!(which, StudyKind::LtiFailure) {
                        harness::scenario_lti_failure(&cfg)?
                    } else {
                        harness::scenario_lpv_validation(&cfg)?
                    }
                }
                StudyKind::Flow => {
                    if let Some(t) = g.t_end {
                        cfg.flow.t_end = t;
                    }
                    harness::scenario_flow_study(&cfg)?
                }
                StudyKind::EcmCoupled => {
                    if let Some(t) = g.t_end {
                        cfg.coupled.t_end = t;
                    }
                    harness::run_ecm_coupled(&cfg)?
                }
            };
            report.write_dir(&g.out)?;
            print_json(serde_json::json!({
                "status": "ok",
                "study": report.study,
                "out": g.out,
                "summary": report.summary,
                "flags": report.flags,
            }));
        }
    }
    Ok(())
}

fn simulate(g: &Global, cfg: &StudyConfig, args: SimulateArgs) -> Result<()> {
    let q_gen = match (&args.heat, args.q) {
        (Some(path), _) => Profile::load_csv(path, "q_gen_W_m3")
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(q)) => Profile::constant(q),
        (None, None) => cfg.validation_heat(),
    };
    let m_dot = match (&args.flow, args.m_dot) {
        (Some(path), _) => Profile::load_csv(path, "m_dot_kg_s")
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(m)) => Profile::constant(m),
        (None, None) => Profile::constant(cfg.validation.m_dot),
    };
    let t_in = Profile::constant(celsius_to_kelvin(
        args.t_in_c.unwrap_or(cfg.validation.t_in_c),
    ));
    let drive = DriveProfiles { q_gen, m_dot, t_in };
    let t_end = g.t_end.unwrap_or(cfg.validation.t_end);
    let model_file = || -> Result<&PathBuf> {
        match &args.model_file {
            Some(p) => Ok(p),
            None => bail!("--model-file is required for this model"),
        }
    };
    let mut extra = serde_json::Map::new();
    let traj = match args.model {
        ModelKind::Plant => {
            let plant = build_plant(&cfg.plant)?;
            let run = simulate_plant(&plant, &drive, t_end, cfg.dt)?;
            extra.insert(
                "energy_imbalance".into(),
                run.energy.relative_imbalance().into(),
            );
            run.trajectory
        }
        ModelKind::Lti => {
            let model = FosterLtiModel::load_json(model_file()?)?;
            if drive.m_dot.points().len() > 1 {
                eprintln!("warning: an LTI model ignores the flow and inlet schedule");
            }
            simulate_lti(&model, &drive.q_gen, model.t0_temperature, t_end, cfg.dt)?
        }
        ModelKind::Lpv => {
            let grid = LpvGrid::load(model_file()?)?;
            let run = simulate_lpv(&grid, &drive, t_end, cfg.dt)?;
            extra.insert("clamp_count".into(), run.clamp_count.into());
            run.trajectory
        }
    };
    let path = out_file(g, "trajectory.csv")?;
    traj.save_csv(&path)?;
    let mut value = serde_json::json!({
        "status": "ok",
        "file": path,
        "final_t_avg_k": traj.final_t_avg(),
    });
    value.as_object_mut().expect("object").extend(extra);
    print_json(value);
    Ok(())
}

fn error_line(message: String) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "status": "error", "message": message })
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{}", e.render());
            return error_line(e.kind().to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => error_line(format!("{e:#}")),
    }
}
