//! Zero-order-hold drive signals.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A piecewise-constant signal: `value(t)` is the value of the last point with
/// `t_i <= t`. Points start at `t = 0` and are strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Profile {
    points: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(t0, _)) = points.first() else {
            return Err(Error::Domain("profile has no points".into()));
        };
        if t0 != 0.0 {
            return Err(Error::Domain(format!(
                "profile must start at t = 0, got {t0}"
            )));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Numeric("profile contains non-finite values".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain(
                "profile times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    /// Builds a profile from `(duration, value)` segments laid end to end.
    pub fn from_segments(segments: &[(f64, f64)]) -> Result<Self> {
        let mut t = 0.0;
        let mut points = Vec::with_capacity(segments.len());
        for &(duration, value) in segments {
            if !(duration > 0.0) {
                return Err(Error::Domain(format!(
                    "segment duration {duration} must be > 0"
                )));
            }
            points.push((t, value));
            t += duration;
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.points.partition_point(|&(ti, _)| ti <= t);
        self.points[i.saturating_sub(1)].1
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            points: self.points.iter().map(|&(t, v)| (t, f(v))).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time-weighted mean and population standard deviation over `[0, horizon]`.
    pub fn time_stats(&self, horizon: f64) -> Result<(f64, f64)> {
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon {horizon} must be > 0")));
        }
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (k, &(t, v)) in self.points.iter().enumerate() {
            if t >= horizon {
                break;
            }
            let end = self.points.get(k + 1).map_or(horizon, |p| p.0.min(horizon));
            let w = end - t;
            sum += w * v;
            sum_sq += w * v * v;
        }
        let mean = sum / horizon;
        let var = (sum_sq / horizon - mean * mean).max(0.0);
        Ok((mean, var.sqrt()))
    }

    /// Reads a two-column CSV. The header must be `t_s,<value_column>`.
    pub fn read_csv<R: Read>(reader: R, value_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let t_idx = headers.iter().position(|h| h == "t_s");
        let v_idx = headers.iter().position(|h| h == value_column);
        let (Some(t_idx), Some(v_idx)) = (t_idx, v_idx) else {
            return Err(Error::Format(format!(
                "expected header t_s,{value_column}, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        };
        let mut points = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {:?}: {e}", &record[i])))
            };
            points.push((parse(t_idx)?, parse(v_idx)?));
        }
        Self::new(points)
    }

    pub fn load_csv(path: impl AsRef<Path>, value_column: &str) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, value_column)
    }

    pub fn write_csv<W: Write>(&self, writer: W, value_column: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t_s", value_column])?;
        for &(t, v) in &self.points {
            wtr.write_record([t.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl TryFrom<Vec<(f64, f64)>> for Profile {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<Profile> for Vec<(f64, f64)> {
    fn from(p: Profile) -> Self {
        p.points
    }
}

/// The three scheduling signals that drive the plant and the LPV model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProfiles {
    /// Volumetric heat generation (W/m³).
    pub q_gen: Profile,
    /// Total coolant mass flow (kg/s).
    pub m_dot: Profile,
    /// Inlet water temperature (K).
    pub t_in: Profile,
}

impl DriveProfiles {
    pub fn constant(q_gen: f64, m_dot: f64, t_in_k: f64) -> Self {
        Self {
            q_gen: Profile::constant(q_gen),
            m_dot: Profile::constant(m_dot),
            t_in: Profile::constant(t_in_k),
        }
    }

    pub fn at(&self, t: f64) -> crate::plant::SchedulePoint {
        crate::plant::SchedulePoint {
            q_gen: self.q_gen.value_at(t),
            m_dot: self.m_dot.value_at(t),
            t_in: self.t_in.value_at(t),
        }
    }
}

/// Number of whole steps of size `dt` in `[0, t_end]`.
pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt = {dt} must be finite and > 0")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!(
            "t_end = {t_end} must be finite and >= 0"
        )));
    }
    Ok((t_end / dt + 1e-9).floor() as usize)
}
