//! Equivalent-circuit electrical model: an SOC-dependent voltage source, a
//! series resistance and one RC branch, with temperature-dependent resistances
//! and capacitance. Heat generation follows the Bernardi energy balance.
//!
//! The current `I` is the total cell current in amperes, positive on
//! discharge. The Bernardi bracket is divided by the cell volume to give a
//! volumetric source in W/m³.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::table::{Table1D, Table2D};

/// Parameter tables of the cell. All tables interpolate linearly and clamp at
/// their end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmParams {
    #[serde(rename = "capacity_ah")]
    pub capacity: f64,
    #[serde(rename = "cell_volume_m3")]
    pub cell_volume: f64,
    /// SOC → open-circuit voltage (V).
    #[serde(rename = "ocv")]
    pub ocv_table: Table1D,
    /// SOC → ∂U_OC/∂T (V/K).
    #[serde(rename = "entropy")]
    pub entropy_table: Table1D,
    /// (SOC, T) → R0 (Ω).
    #[serde(rename = "r0")]
    pub r0_table: Table2D,
    /// (SOC, T) → R1 (Ω).
    #[serde(rename = "r1")]
    pub r1_table: Table2D,
    /// (SOC, T) → C1 (F).
    #[serde(rename = "c1")]
    pub c1_table: Table2D,
}

/// Synthetic default parameter file. The numbers are plausible for a large
/// pouch cell but are not a measured data set.
pub const DEFAULT_PARAMS_JSON: &str = include_str!("../data/ecm_default.json");

impl EcmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::Config(format!(
                "capacity {} Ah must be > 0",
                self.capacity
            )));
        }
        if !(self.cell_volume.is_finite() && self.cell_volume > 0.0) {
            return Err(Error::Config(format!(
                "cell volume {} m³ must be > 0",
                self.cell_volume
            )));
        }
        if !self.ocv_table.is_nondecreasing() {
            return Err(Error::Config(
                "ocv table must be nondecreasing in SOC".into(),
            ));
        }
        for (name, t) in [("ocv", &self.ocv_table), ("entropy", &self.entropy_table)] {
            let xs = t.xs();
            if xs.len() > 1 && (xs[0] != 0.0 || xs[xs.len() - 1] != 1.0) {
                return Err(Error::Config(format!("{name} table must span SOC 0..1")));
            }
        }
        for (name, t) in [
            ("r0", &self.r0_table),
            ("r1", &self.r1_table),
            ("c1", &self.c1_table),
        ] {
            if t.values().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config(format!("{name} table values must be > 0")));
            }
            let xs = t.xs();
            if xs.len() > 1 && (xs[0] != 0.0 || xs[xs.len() - 1] != 1.0) {
                return Err(Error::Config(format!("{name} table must span SOC 0..1")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_synthetic() -> Self {
        Self::from_json(DEFAULT_PARAMS_JSON).expect("shipped ECM parameters are valid")
    }

    /// Time constant R1·C1 at `(soc, temperature)`.
    pub fn tau_rc(&self, soc: f64, temperature: f64) -> f64 {
        self.r1_table.eval(soc, temperature) * self.c1_table.eval(soc, temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcmState {
    pub soc: f64,
    /// Voltage across the RC branch (V).
    pub v_rc: f64,
    /// Cell temperature (K).
    pub temperature: f64,
}

impl EcmState {
    pub fn new(soc: f64, temperature: f64) -> Self {
        Self {
            soc,
            v_rc: 0.0,
            temperature,
        }
    }
}

/// Result of one [`step_ecm`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcmStep {
    pub state: EcmState,
    pub terminal_voltage: f64,
    /// SOC hit 0 or 1 and was clamped.
    pub saturated: bool,
}

fn check_soc(soc: f64) -> Result<()> {
    if (0.0..=1.0).contains(&soc) {
        Ok(())
    } else {
        Err(Error::Domain(format!("soc = {soc} outside [0, 1]")))
    }
}

pub fn ocv(params: &EcmParams, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(params.ocv_table.eval(soc))
}

/// ∂U_OC/∂T at `soc` (V/K). May be negative.
pub fn entropy_coeff(params: &EcmParams, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(params.entropy_table.eval(soc))
}

/// Advances SOC by coulomb counting and the RC branch by its exact
/// first-order update over `dt`, with `τ = R1·C1` taken at the start-of-step
/// SOC and temperature. The state temperature is carried through unchanged.
pub fn step_ecm(params: &EcmParams, state: &EcmState, current: f64, dt: f64) -> Result<EcmStep> {
    ensure_finite("current", current)?;
    ensure_finite("dt", dt)?;
    ensure_finite("soc", state.soc)?;
    ensure_finite("v_rc", state.v_rc)?;
    ensure_finite("temperature", state.temperature)?;
    if dt <= 0.0 {
        return Err(Error::Domain(format!("dt = {dt} must be > 0")));
    }
    if state.temperature <= 0.0 {
        return Err(Error::Domain(format!(
            "temperature {} K must be > 0",
            state.temperature
        )));
    }
    check_soc(state.soc)?;

    let t = state.temperature;
    let raw_soc = state.soc - current * dt / (3600.0 * params.capacity);
    let soc = raw_soc.clamp(0.0, 1.0);
    let saturated = soc != raw_soc;

    let r1 = params.r1_table.eval(state.soc, t);
    let decay = (-dt / params.tau_rc(state.soc, t)).exp();
    let v_rc = state.v_rc * decay + current * r1 * (1.0 - decay);

    let v = params.ocv_table.eval(soc) - current * params.r0_table.eval(soc, t) - v_rc;
    ensure_finite("terminal voltage", v)?;
    Ok(EcmStep {
        state: EcmState {
            soc,
            v_rc,
            temperature: t,
        },
        terminal_voltage: v,
        saturated,
    })
}

/// Volumetric heat generation `[I·(U_OC − V) − I·T·∂U_OC/∂T] / V_cell` (W/m³).
pub fn heat_generation(
    current: f64,
    u_oc: f64,
    v: f64,
    temperature: f64,
    duoc_dt: f64,
    cell_volume: f64,
) -> Result<f64> {
    if !(cell_volume > 0.0) {
        return Err(Error::Domain(format!(
            "cell volume {cell_volume} must be > 0"
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!(
            "temperature {temperature} K must be > 0"
        )));
    }
    let irreversible = current * (u_oc - v);
    let reversible = -current * temperature * duoc_dt;
    Ok((irreversible + reversible) / cell_volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_params(capacity: f64, r1: f64, c1: f64) -> EcmParams {
        EcmParams {
            capacity,
            cell_volume: 1.5e-4,
            ocv_table: Table1D::new(&[[0.0, 3.0], [1.0, 4.2]]).unwrap(),
            entropy_table: Table1D::constant(-1e-4),
            r0_table: Table2D::constant(0.01),
            r1_table: Table2D::constant(r1),
            c1_table: Table2D::constant(c1),
        }
    }

    #[test]
    fn ocv_table_nodes_and_midpoint() {
        let p = flat_params(20.0, 0.005, 2000.0);
        assert_eq!(ocv(&p, 0.0).unwrap(), 3.0);
        assert!((ocv(&p, 0.5).unwrap() - 3.6).abs() < 1e-15);
        assert!(matches!(ocv(&p, 1.2), Err(Error::Domain(_))));
        assert!(ocv(&p, -0.01).is_err());
    }

    #[test]
    fn ocv_eleven_node_table_against_hand_interpolation() {
        let nodes: Vec<[f64; 2]> = (0..=10)
            .map(|i| {
                let s = i as f64 / 10.0;
                [s, 3.0 + 1.2 * s + 0.1 * (6.0 * s).sin().abs()]
            })
            .collect();
        let p = EcmParams {
            ocv_table: Table1D::new(&nodes).unwrap(),
            ..flat_params(20.0, 0.005, 2000.0)
        };
        // soc 0.37 lies between the 0.3 and 0.4 nodes, 70% of the way.
        let (lo, hi) = (nodes[3][1], nodes[4][1]);
        let expected = lo + 0.7 * (hi - lo);
        assert!((ocv(&p, 0.37).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_coefficient_tables() {
        let p = flat_params(20.0, 0.005, 2000.0);
        assert_eq!(entropy_coeff(&p, 0.123).unwrap(), -1e-4);
        let p = EcmParams {
            entropy_table: Table1D::new(&[[0.0, -2e-4], [1.0, 0.0]]).unwrap(),
            ..p
        };
        assert!((entropy_coeff(&p, 0.5).unwrap() + 1e-4).abs() < 1e-18);
        let shipped = EcmParams::default_synthetic();
        let ys = shipped.entropy_table.ys();
        assert!(ys.iter().any(|&v| v > 0.0) && ys.iter().any(|&v| v < 0.0));
        for (&x, &y) in shipped.entropy_table.xs().iter().zip(ys) {
            assert_eq!(entropy_coeff(&shipped, x).unwrap(), y);
        }
    }

    #[test]
    fn open_circuit_step_is_identity() {
        let p = flat_params(20.0, 0.005, 2000.0);
        let s = EcmState::new(0.6, 298.15);
        let out = step_ecm(&p, &s, 0.0, 10.0).unwrap();
        assert_eq!(out.state, s);
        assert_eq!(out.terminal_voltage, ocv(&p, 0.6).unwrap());
        assert!(!out.saturated);
    }

    #[test]
    fn one_c_for_half_an_hour_removes_half_the_charge() {
        let p = flat_params(20.0, 0.005, 2000.0);
        let mut s = EcmState::new(0.9, 298.15);
        for _ in 0..1800 {
            s = step_ecm(&p, &s, 20.0, 1.0).unwrap().state;
        }
        assert!((s.soc - 0.4).abs() < 1e-12);
    }

    #[test]
    fn soc_saturates_instead_of_failing() {
        let p = flat_params(1.0, 0.005, 2000.0);
        let out = step_ecm(&p, &EcmState::new(0.01, 298.15), 10.0, 60.0).unwrap();
        assert_eq!(out.state.soc, 0.0);
        assert!(out.saturated);
        let out = step_ecm(&p, &EcmState::new(0.99, 298.15), -10.0, 60.0).unwrap();
        assert_eq!(out.state.soc, 1.0);
        assert!(out.saturated);
    }

    #[test]
    fn rc_branch_matches_closed_form() {
        let (r1, c1, i) = (0.004, 5000.0, 30.0);
        let p = flat_params(50.0, r1, c1);
        let mut s = EcmState::new(1.0, 298.15);
        let dt = 0.1;
        for _ in 0..2000 {
            s = step_ecm(&p, &s, i, dt).unwrap().state;
        }
        let t = 2000.0 * dt;
        let analytic = i * r1 * (1.0 - (-t / (r1 * c1)).exp());
        assert!((s.v_rc - analytic).abs() < 1e-6, "{} vs {analytic}", s.v_rc);
    }

    #[test]
    fn rc_error_shrinks_with_step_when_tau_depends_on_soc() {
        let mut p = flat_params(2.0, 0.004, 5000.0);
        p.r1_table = Table2D::new(&[[0.0, 298.15, 0.012], [1.0, 298.15, 0.002]]).unwrap();
        let run = |dt: f64| {
            let mut s = EcmState::new(1.0, 298.15);
            let n = (600.0 / dt).round() as usize;
            for _ in 0..n {
                s = step_ecm(&p, &s, 2.0, dt).unwrap().state;
            }
            s.v_rc
        };
        let reference = run(0.01);
        let errors: Vec<f64> = [8.0, 4.0, 2.0]
            .iter()
            .map(|&dt| (run(dt) - reference).abs())
            .collect();
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn bernardi_hand_values() {
        assert_eq!(
            heat_generation(0.0, 3.8, 3.6, 300.0, -1e-4, 1e-4).unwrap(),
            0.0
        );
        assert_eq!(
            heat_generation(10.0, 3.7, 3.7, 300.0, 0.0, 1e-4).unwrap(),
            0.0
        );
        let q = heat_generation(10.0, 3.8, 3.6, 300.0, -1e-4, 1e-4).unwrap();
        assert!((q - 2.3e4).abs() < 1e-8);
        assert!(heat_generation(10.0, 3.8, 3.6, 300.0, 0.0, 0.0).is_err());
        assert!(heat_generation(10.0, 3.8, 3.6, 0.0, 0.0, 1e-4).is_err());
    }

    #[test]
    fn rejects_nonfinite_inputs() {
        let p = flat_params(20.0, 0.005, 2000.0);
        let s = EcmState::new(0.5, 298.15);
        assert!(matches!(
            step_ecm(&p, &s, f64::NAN, 1.0),
            Err(Error::Numeric(_))
        ));
        assert!(step_ecm(&p, &s, 1.0, 0.0).is_err());
    }

    #[test]
    fn parameter_file_round_trip_and_validation() {
        let p = EcmParams::default_synthetic();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(EcmParams::from_json(&text).unwrap(), p);
        let mut bad = p.clone();
        bad.capacity = 0.0;
        assert!(bad.validate().is_err());
        let bad_ocv = text.replace("\"ocv\":[[0.0,3.0]", "\"ocv\":[[0.0,9.0]");
        assert!(EcmParams::from_json(&bad_ocv).is_err());
    }

    proptest! {
        #[test]
        fn soc_is_conserved_by_coulomb_counting(
            segments in prop::collection::vec((-40.0f64..40.0, 1usize..20), 1..20),
        ) {
            let p = flat_params(1000.0, 0.005, 2000.0);
            let mut s = EcmState::new(0.5, 298.15);
            let mut charge = 0.0;
            for &(i, n) in &segments {
                for _ in 0..n {
                    s = step_ecm(&p, &s, i, 1.0).unwrap().state;
                    charge += i;
                }
            }
            prop_assert!((s.soc - (0.5 - charge / 3.6e6)).abs() < 1e-12);
        }

        #[test]
        fn bernardi_terms_are_separately_linear(
            i in 0.1f64..100.0,
            dv in 0.0f64..0.5,
            dudt in -5e-4f64..5e-4,
            t in 250.0f64..350.0,
        ) {
            let vol = 1.5e-4;
            let base = heat_generation(i, 3.8, 3.8 - dv, t, dudt, vol).unwrap();
            let rev = -i * t * dudt / vol;
            let doubled = heat_generation(i, 3.8, 3.8 - 2.0 * dv, t, dudt, vol).unwrap();
            prop_assert!((doubled - rev - 2.0 * (base - rev)).abs() <= 1e-9 * base.abs().max(1.0));
            let flipped = heat_generation(i, 3.8, 3.8 - dv, t, -dudt, vol).unwrap();
            prop_assert!((flipped - (base - 2.0 * rev)).abs() <= 1e-9 * base.abs().max(1.0));
            let irreversible_only = heat_generation(i, 3.8, 3.8 - dv - 1e-3, t, 0.0, vol).unwrap();
            prop_assert!(irreversible_only > 0.0);
        }
    }
}
