use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{simulate_plant, PlantModel, SchedulePoint};
use crate::profile::DriveProfiles;

/// `|dT_avg/dt|` (K/s) below which a response counts as settled.
pub const SETTLING_SLOPE: f64 = 1e-4;

/// Cell-average temperature response to a heat-generation step applied at
/// `t = 0` with constant flow and inlet temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub op: SchedulePoint,
    pub t0_temperature: f64,
    /// `(t, ΔT)` with `ΔT = T_avg(t) − T_avg(0)` in K.
    pub samples: Vec<(f64, f64)>,
    /// `(t, ΔT / q̇_step)` in K·m³/W.
    pub normalized: Vec<(f64, f64)>,
    /// `dT_avg/dt` over the last sample interval (K/s).
    pub final_slope: f64,
    pub warnings: Vec<String>,
}

impl StepResponse {
    /// Builds a response from raw samples, deriving the normalised series.
    pub fn from_samples(
        op: SchedulePoint,
        t0_temperature: f64,
        samples: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if op.q_gen == 0.0 {
            return Err(Error::Domain(
                "step response needs a nonzero heat step".into(),
            ));
        }
        if samples.len() < 2 {
            return Err(Error::Domain(
                "step response needs at least two samples".into(),
            ));
        }
        if samples[0] != (0.0, 0.0) {
            return Err(Error::Domain("step response must start at (0, 0)".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain(
                "step response times must be strictly increasing".into(),
            ));
        }
        let normalized = samples.iter().map(|&(t, d)| (t, d / op.q_gen)).collect();
        let n = samples.len();
        let final_slope =
            (samples[n - 1].1 - samples[n - 2].1) / (samples[n - 1].0 - samples[n - 2].0);
        let mut warnings = Vec::new();
        if final_slope.abs() >= SETTLING_SLOPE {
            warnings.push(format!(
                "response not settled: |dT/dt| = {:.3e} K/s at t = {} s",
                final_slope.abs(),
                samples[n - 1].0
            ));
        }
        Ok(Self {
            op,
            t0_temperature,
            samples,
            normalized,
            final_slope,
            warnings,
        })
    }

    pub fn is_settled(&self) -> bool {
        self.final_slope.abs() < SETTLING_SLOPE
    }

    pub fn final_normalized(&self) -> f64 {
        self.normalized.last().map_or(0.0, |p| p.1)
    }

    /// CSV with a leading `#` line carrying the operating point.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(
            writer,
            "# q_gen_W_m3={},m_dot_kg_s={},t_in_K={},t0_K={}",
            self.op.q_gen, self.op.m_dot, self.op.t_in, self.t0_temperature
        )?;
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t_s", "delta_T_K", "normalized_K_m3_per_W"])?;
        for (&(t, d), &(_, n)) in self.samples.iter().zip(&self.normalized) {
            wtr.write_record([t.to_string(), d.to_string(), n.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("missing operating-point comment line".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in meta.trim().split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad operating-point field {kv:?}")))?;
            let v: f64 = v
                .parse()
                .map_err(|e| Error::Format(format!("bad number in {kv:?}: {e}")))?;
            fields.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("operating point lacks {k}")))
        };
        let op = SchedulePoint::new(get("q_gen_W_m3")?, get("m_dot_kg_s")?, get("t_in_K")?);
        let t0 = get("t0_K")?;
        let mut rdr = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse()
                    .map_err(|e| Error::Format(format!("bad number {:?}: {e}", &record[i])))
            };
            samples.push((num(0)?, num(1)?));
        }
        Self::from_samples(op, t0, samples)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Runs the plant from its initial state with `q̇` stepped to `op.q_gen` at
/// `t = 0` and records the cell-average temperature rise.
pub fn extract_step_response(
    model: &PlantModel,
    op: SchedulePoint,
    t_end: f64,
    dt: f64,
) -> Result<StepResponse> {
    if op.q_gen == 0.0 {
        return Err(Error::Domain("heat step q_gen must be nonzero".into()));
    }
    op.validate()?;
    let run = simulate_plant(
        model,
        &DriveProfiles::constant(op.q_gen, op.m_dot, op.t_in),
        t_end,
        dt,
    )?;
    let traj = run.trajectory;
    let base = traj.t_avg[0];
    let samples = traj
        .t
        .iter()
        .zip(&traj.t_avg)
        .map(|(&t, &v)| (t, v - base))
        .collect();
    StepResponse::from_samples(op, model.config().initial_temperature, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_plant, PlantConfig};

    #[test]
    fn zero_step_is_rejected() {
        let model = build_plant(&PlantConfig::default()).unwrap();
        let op = SchedulePoint::with_celsius_inlet(0.0, 2e-3, 5.0);
        assert!(matches!(
            extract_step_response(&model, op, 10.0, 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn short_run_warns_about_settling() {
        let model = build_plant(&PlantConfig::default()).unwrap();
        let op = SchedulePoint::with_celsius_inlet(5e6, 2e-3, 5.0);
        let resp = extract_step_response(&model, op, 20.0, 0.5).unwrap();
        assert!(!resp.is_settled());
        assert_eq!(resp.warnings.len(), 1);
        assert_eq!(resp.samples[0], (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip_keeps_operating_point() {
        let op = SchedulePoint::with_celsius_inlet(1e5, 2e-3, 5.0);
        let resp =
            StepResponse::from_samples(op, 300.0, vec![(0.0, 0.0), (0.5, -0.25), (1.0, -0.375)])
                .unwrap();
        let mut buf = Vec::new();
        resp.write_csv(&mut buf).unwrap();
        let back = StepResponse::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, resp);
    }
}
