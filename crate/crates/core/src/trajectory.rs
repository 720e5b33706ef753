//! Sampled temperature trajectories shared by the plant and the reduced models.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled trajectory. Reduced models only produce `t_avg`; the plant also
/// fills in the maximum cell temperature and the coolant outlet temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimulationResult {
    pub t: Vec<f64>,
    /// Volume-weighted cell-average temperature (K).
    pub t_avg: Vec<f64>,
    pub t_max: Option<Vec<f64>>,
    pub t_out: Option<Vec<f64>>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_t_avg(&self) -> Option<f64> {
        self.t_avg.last().copied()
    }

    /// Value of `t_avg` at time `t` under zero-order hold on the sample grid.
    pub fn t_avg_at(&self, t: f64) -> Option<f64> {
        if self.t.is_empty() || t < self.t[0] {
            return None;
        }
        let i = self
            .t
            .partition_point(|&ti| ti <= t + 1e-9 * t.abs().max(1.0));
        Some(self.t_avg[i.saturating_sub(1)])
    }

    /// CSV with header `t_s,T_avg_K,T_max_K,T_out_K`. Columns a model does not
    /// produce are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t_s", "T_avg_K", "T_max_K", "T_out_K"])?;
        let opt = |col: &Option<Vec<f64>>, i: usize| {
            col.as_ref().map_or(String::new(), |c| c[i].to_string())
        };
        for i in 0..self.t.len() {
            wtr.write_record([
                self.t[i].to_string(),
                self.t_avg[i].to_string(),
                opt(&self.t_max, i),
                opt(&self.t_out, i),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_s", "T_avg_K", "T_max_K", "T_out_K"] {
            return Err(Error::Format(format!(
                "unexpected trajectory header {headers:?}"
            )));
        }
        let mut out = SimulationResult::default();
        let mut t_max = Vec::new();
        let mut t_out = Vec::new();
        let mut have_max = true;
        let mut have_out = true;
        for record in rdr.records() {
            let record = record?;
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
            };
            out.t.push(num(&record[0])?);
            out.t_avg.push(num(&record[1])?);
            match &record[2] {
                "" => have_max = false,
                s => t_max.push(num(s)?),
            }
            match &record[3] {
                "" => have_out = false,
                s => t_out.push(num(s)?),
            }
        }
        if have_max && t_max.len() == out.t.len() && !out.t.is_empty() {
            out.t_max = Some(t_max);
        }
        if have_out && t_out.len() == out.t.len() && !out.t.is_empty() {
            out.t_out = Some(t_out);
        }
        Ok(out)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_and_without_optional_columns() {
        let full = SimulationResult {
            t: vec![0.0, 0.5],
            t_avg: vec![300.0, 299.9],
            t_max: Some(vec![300.0, 300.1]),
            t_out: Some(vec![300.0, 290.0]),
        };
        let mut buf = Vec::new();
        full.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t_s,T_avg_K,T_max_K,T_out_K\n"));
        assert_eq!(SimulationResult::read_csv(buf.as_slice()).unwrap(), full);

        let reduced = SimulationResult {
            t_max: None,
            t_out: None,
            ..full
        };
        let mut buf = Vec::new();
        reduced.write_csv(&mut buf).unwrap();
        assert_eq!(SimulationResult::read_csv(buf.as_slice()).unwrap(), reduced);
    }
}
