use cellrom::lpv::*;
use cellrom::plant::{build_plant, simulate_plant, PlantConfig, SchedulePoint};
use cellrom::rom::{simulate_lti, FosterLtiModel};
use cellrom::{DriveProfiles, Error, Profile};
use proptest::prelude::*;

fn provenance() -> GridProvenance {
    GridProvenance {
        plant_config_hash: "synthetic".into(),
        t_end_s: 1000.0,
        dt_s: 0.5,
        order: 2,
        fit_seed: None,
    }
}

fn synthetic_vertex(p: SchedulePoint) -> FosterLtiModel {
    let cooling = (p.t_in - 300.0) / p.q_gen;
    let gains = vec![2e-5 + 0.02 * p.m_dot + 0.7 * cooling, -3e-6 + 0.3 * cooling];
    let taus = vec![60.0 / (1.0 + 400.0 * p.m_dot) + 20.0, 4.0 + 1e3 * p.m_dot];
    FosterLtiModel::new(gains, taus, p, 300.0, 0.0).unwrap()
}

fn synthetic_grid() -> LpvGrid {
    let axes = LpvAxes::new(vec![1e5, 5e5, 5e6], vec![5e-4, 1e-3, 3e-3], vec![5.0, 20.0]).unwrap();
    let vertices = (0..axes.vertex_count())
        .map(|i| synthetic_vertex(axes.point(axes.unflatten(i))))
        .collect();
    LpvGrid::new(axes, AxisMetrics::default(), vertices, provenance()).unwrap()
}

#[test]
fn vertices_are_reproduced_exactly() {
    let grid = synthetic_grid();
    let [nq, nm, nt] = grid.axes().shape();
    for iq in 0..nq {
        for im in 0..nm {
            for it in 0..nt {
                let v = grid.vertex([iq, im, it]);
                let (p, clamped) = grid.interpolate(&grid.axes().point([iq, im, it]));
                assert!(!clamped);
                assert_eq!(p.gains, v.gains);
                assert_eq!(p.taus, v.taus);
            }
        }
    }
}

#[test]
fn reciprocal_heat_metric_is_exact_for_cooling_terms() {
    let grid = synthetic_grid();
    for q in [1.3e5, 2e5, 4.9e5, 7e5, 2e6, 4.5e6] {
        let p = SchedulePoint::with_celsius_inlet(q, 1e-3, 5.0);
        let got = interpolate_model(&grid, &p);
        let want = synthetic_vertex(p);
        for (g, w) in got.gains.iter().zip(&want.gains) {
            assert!(
                (g - w).abs() <= 1e-12 * w.abs().max(1e-9),
                "q = {q}: {g} vs {w}"
            );
        }
        for (a, b) in got.taus.iter().zip(&want.taus) {
            assert!((a - b).abs() <= 1e-14 * b);
        }
    }
}

#[test]
fn single_vertex_grid_matches_the_lti_model() {
    let op = SchedulePoint::with_celsius_inlet(1e6, 2e-3, 5.0);
    let model = synthetic_vertex(op);
    let grid = LpvGrid::from_single(model.clone(), provenance()).unwrap();
    let q = Profile::from_segments(&[(50.0, 1e6), (70.0, 3e5), (80.0, 4e6)]).unwrap();
    let drive = DriveProfiles {
        q_gen: q.clone(),
        m_dot: Profile::constant(2e-3),
        t_in: Profile::constant(278.15),
    };
    let lpv = simulate_lpv(&grid, &drive, 200.0, 0.5).unwrap();
    let lti = simulate_lti(&model, &q, model.t0_temperature, 200.0, 0.5).unwrap();
    assert_eq!(lpv.trajectory.t, lti.t);
    for (a, b) in lpv.trajectory.t_avg.iter().zip(&lti.t_avg) {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }
    // the hull is a single point, so every step off the vertex heat is clamped
    assert_eq!(lpv.clamp_count, 300);
}

#[test]
fn zero_heat_keeps_the_initial_temperature() {
    let grid = synthetic_grid();
    let drive = DriveProfiles {
        q_gen: Profile::constant(0.0),
        m_dot: Profile::from_segments(&[(30.0, 5e-4), (30.0, 2e-3), (40.0, 3e-3)]).unwrap(),
        t_in: Profile::from_segments(&[(45.0, 278.15), (55.0, 290.0)]).unwrap(),
    };
    let run = simulate_lpv(&grid, &drive, 100.0, 0.5).unwrap();
    assert!(run.trajectory.t_avg.iter().all(|&t| t == 300.0));
}

#[test]
fn out_of_hull_steps_are_counted() {
    let grid = synthetic_grid();
    let drive = DriveProfiles {
        q_gen: Profile::from_segments(&[(10.0, 2e5), (10.0, 1e7), (10.0, 2e5)]).unwrap(),
        m_dot: Profile::constant(1e-3),
        t_in: Profile::constant(283.15),
    };
    let run = simulate_lpv(&grid, &drive, 30.0, 1.0).unwrap();
    assert_eq!(run.clamp_count, 10);
    let (inside, _) = grid.interpolate(&SchedulePoint::with_celsius_inlet(5e6, 1e-3, 10.0));
    let (outside, clamped) = grid.interpolate(&SchedulePoint::with_celsius_inlet(1e7, 1e-3, 10.0));
    assert!(clamped);
    assert_eq!(inside, outside);
}

#[test]
fn grid_file_round_trip() {
    let grid = synthetic_grid();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    grid.save(&path).unwrap();
    let back = LpvGrid::load(&path).unwrap();
    assert_eq!(back, grid);
    assert_eq!(back.hash(), grid.hash());
}

#[test]
fn malformed_grid_files_are_rejected() {
    let grid = synthetic_grid();
    let mut json: serde_json::Value = serde_json::from_str(&grid.to_json().unwrap()).unwrap();

    let mut wrong_version = json.clone();
    wrong_version["format_version"] = serde_json::json!(GRID_FORMAT_VERSION + 1);
    assert!(matches!(
        LpvGrid::from_json(&wrong_version.to_string()),
        Err(Error::Format(_))
    ));

    let mut missing = json.clone();
    missing["vertices"].as_array_mut().unwrap().pop();
    assert!(matches!(
        LpvGrid::from_json(&missing.to_string()),
        Err(Error::Format(_))
    ));

    let mut duplicate = json.clone();
    let first = duplicate["vertices"][0].clone();
    duplicate["vertices"].as_array_mut().unwrap()[1] = first;
    assert!(matches!(
        LpvGrid::from_json(&duplicate.to_string()),
        Err(Error::Format(_))
    ));

    json["unexpected"] = serde_json::json!(1);
    assert!(LpvGrid::from_json(&json.to_string()).is_err());
}

#[test]
fn mismatched_vertices_are_rejected() {
    let axes = LpvAxes::new(vec![1e5, 1e6], vec![1e-3], vec![10.0]).unwrap();
    let good = synthetic_vertex(axes.point([0, 0, 0]));
    let wrong_op = synthetic_vertex(axes.point([0, 0, 0]));
    assert!(LpvGrid::new(
        axes.clone(),
        AxisMetrics::default(),
        vec![good.clone(), wrong_op],
        provenance()
    )
    .is_err());
    assert!(LpvGrid::new(axes, AxisMetrics::default(), vec![good], provenance()).is_err());
}

type Bounds = Vec<(f64, f64)>;

fn corner_bounds(grid: &LpvGrid, p: &SchedulePoint) -> (Bounds, Bounds) {
    let axes = grid.axes();
    let span = |axis: &[f64], x: f64| -> (usize, usize) {
        let x = x.clamp(axis[0], axis[axis.len() - 1]);
        let hi = axis.partition_point(|&a| a < x).min(axis.len() - 1);
        let lo = if axis[hi] == x { hi } else { hi - 1 };
        (lo, hi)
    };
    let t_axis: Vec<f64> = axes.t_in_c.iter().map(|c| c + 273.15).collect();
    let (q0, q1) = span(&axes.q_gen, p.q_gen);
    let (m0, m1) = span(&axes.m_dot, p.m_dot);
    let (t0, t1) = span(&t_axis, p.t_in);
    let n = grid.order();
    let mut g = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    let mut tau = g.clone();
    for iq in [q0, q1] {
        for im in [m0, m1] {
            for it in [t0, t1] {
                let v = grid.vertex([iq, im, it]);
                for k in 0..n {
                    g[k] = (g[k].0.min(v.gains[k]), g[k].1.max(v.gains[k]));
                    tau[k] = (tau[k].0.min(v.taus[k]), tau[k].1.max(v.taus[k]));
                }
            }
        }
    }
    (g, tau)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interpolated_parameters_stay_in_the_cell_hull(
        lq in 4.5f64..7.2,
        m in 1e-4f64..4e-3,
        t_c in 0.0f64..25.0,
    ) {
        let grid = synthetic_grid();
        let p = SchedulePoint::with_celsius_inlet(10f64.powf(lq), m, t_c);
        let (params, _) = grid.interpolate(&p);
        let (g, tau) = corner_bounds(&grid, &p);
        for k in 0..grid.order() {
            let slack = 1e-12 * g[k].1.abs().max(g[k].0.abs());
            prop_assert!(params.gains[k] >= g[k].0 - slack && params.gains[k] <= g[k].1 + slack);
            prop_assert!(params.taus[k] >= tau[k].0 * (1.0 - 1e-12) && params.taus[k] <= tau[k].1 * (1.0 + 1e-12));
        }
        prop_assert!(params.taus.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn built_grid_tracks_the_plant_between_heat_vertices() {
    let plant = build_plant(&PlantConfig::default().with_mesh(8, 2)).unwrap();
    let axes = LpvAxes::new(vec![1e5, 1e6, 5e6], vec![1e-3], vec![10.0]).unwrap();
    let opts = GridBuildOptions {
        t_end: 2500.0,
        dt: 1.0,
        ..GridBuildOptions::default()
    };
    let grid = build_lpv_grid(&plant, &axes, &opts).unwrap();
    let taus = &grid.vertex([0, 0, 0]).taus;
    for iq in 1..3 {
        assert_eq!(&grid.vertex([iq, 0, 0]).taus, taus, "shared time constants");
    }
    let drive = DriveProfiles {
        q_gen: Profile::from_segments(&[(300.0, 3e5), (300.0, 2.5e6), (300.0, 6e5)]).unwrap(),
        m_dot: Profile::constant(1e-3),
        t_in: Profile::constant(283.15),
    };
    let reference = simulate_plant(&plant, &drive, 900.0, 1.0).unwrap();
    let run = simulate_lpv(&grid, &drive, 900.0, 1.0).unwrap();
    assert_eq!(run.clamp_count, 0);
    let err = cellrom::harness::metric_errors(&run.trajectory, &reference.trajectory).unwrap();
    assert!(err.max_rel_error_pct < 1.0, "{err:?}");
}
