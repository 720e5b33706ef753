use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::SimulationResult;

/// Scalar results of one case. Absent entries do not apply to the study.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_error_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rel_error_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temp_std_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_cov_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_mean_kg_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_count: Option<usize>,
    /// Further case-specific numbers, keyed by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl CaseMetrics {
    fn values(&self) -> impl Iterator<Item = (&str, f64)> {
        [
            ("max_abs_error_k", self.max_abs_error_k),
            ("max_rel_error_pct", self.max_rel_error_pct),
            ("temp_std_k", self.temp_std_k),
            ("flow_cov_pct", self.flow_cov_pct),
            ("flow_mean_kg_s", self.flow_mean_kg_s),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .chain(self.extra.iter().map(|(k, v)| (k.as_str(), *v)))
    }
}

/// Extra per-step columns written next to a trajectory, such as drive signals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Signals {
    pub names: Vec<String>,
    /// One row per sample, aligned with `names`.
    pub rows: Vec<Vec<f64>>,
}

impl Signals {
    pub fn new(names: &[&str]) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.names.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.names)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub name: String,
    /// Trajectory file, relative to the report directory.
    pub trajectory_csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signals_csv: Option<String>,
    pub metrics: CaseMetrics,
    #[serde(skip)]
    pub trajectory: SimulationResult,
    #[serde(skip)]
    pub signals: Option<Signals>,
}

impl CaseReport {
    pub fn new(name: impl Into<String>, trajectory: SimulationResult) -> Self {
        let name = name.into();
        Self {
            trajectory_csv: format!("{name}.csv"),
            signals_csv: None,
            name,
            metrics: CaseMetrics::default(),
            trajectory,
            signals: None,
        }
    }

    pub fn with_signals(mut self, signals: Signals) -> Self {
        self.signals_csv = Some(format!("{}_signals.csv", self.name));
        self.signals = Some(signals);
        self
    }
}

/// Structured result of one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub cases: Vec<CaseReport>,
    /// Study-level numbers.
    pub summary: BTreeMap<String, f64>,
    /// Pass/fail style observations.
    pub flags: BTreeMap<String, bool>,
    /// Hashes of every configuration that fed the study.
    pub provenance: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn new(study: impl Into<String>) -> Self {
        Self {
            study: study.into(),
            cases: Vec::new(),
            summary: BTreeMap::new(),
            flags: BTreeMap::new(),
            provenance: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn case(&self, name: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Domain(format!("study {} has no cases", self.study)));
        }
        for case in &self.cases {
            if let Some((k, v)) = case.metrics.values().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "case {} metric {k} = {v}",
                    case.name
                )));
            }
        }
        if let Some((k, v)) = self.summary.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("summary {k} = {v}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json`, one trajectory CSV per case, optional signal
    /// CSVs and `plot.py` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for case in &self.cases {
            case.trajectory.save_csv(dir.join(&case.trajectory_csv))?;
            if let (Some(file), Some(signals)) = (&case.signals_csv, &case.signals) {
                signals.write_csv(std::fs::File::create(dir.join(file))?)?;
            }
        }
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        std::fs::write(dir.join("plot.py"), PLOT_SCRIPT)?;
        Ok(())
    }
}

/// Plots every case trajectory listed in `report.json` next to the script.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot the cell-average temperature of every case in report.json."""
import csv
import json
import pathlib
import sys

import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
report = json.loads((here / "report.json").read_text())

fig, ax = plt.subplots(figsize=(8, 4.5))
for case in report["cases"]:
    with open(here / case["trajectory_csv"], newline="") as f:
        rows = list(csv.DictReader(f))
    t = [float(r["t_s"]) for r in rows]
    temp = [float(r["T_avg_K"]) - 273.15 for r in rows]
    ax.plot(t, temp, label=case["name"])
ax.set_xlabel("time (s)")
ax.set_ylabel("average cell temperature (°C)")
ax.set_title(report["study"])
ax.legend()
fig.tight_layout()
fig.savefig(here / "temperature.png", dpi=150)
print(f"wrote {here / 'temperature.png'}")
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn small_report() -> StudyReport {
        let traj = SimulationResult {
            t: vec![0.0, 0.5],
            t_avg: vec![300.0, 300.25],
            t_max: None,
            t_out: None,
        };
        let mut case = CaseReport::new("only", traj);
        case.metrics.max_abs_error_k = Some(0.1);
        let mut signals = Signals::new(&["t_s", "q_gen_W_m3"]);
        signals.push(vec![0.0, 1e5]);
        signals.push(vec![0.5, 1e5]);
        let mut r = StudyReport::new("demo");
        r.cases.push(case.with_signals(signals));
        r.provenance.insert("config".into(), "abc".into());
        r
    }

    #[test]
    fn written_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let r = small_report();
        r.write_dir(dir.path()).unwrap();
        let back =
            SimulationResult::read_csv(std::fs::File::open(dir.path().join("only.csv")).unwrap())
                .unwrap();
        assert_eq!(back, r.cases[0].trajectory);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(json["cases"][0]["signals_csv"], "only_signals.csv");
        assert!(dir.path().join("plot.py").exists());
    }

    #[test]
    fn non_finite_metrics_are_rejected() {
        let mut r = small_report();
        r.cases[0].metrics.temp_std_k = Some(f64::NAN);
        assert!(r.validate().is_err());
        r.cases.clear();
        assert!(r.validate().is_err());
    }
}
