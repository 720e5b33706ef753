use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::SimulationResult;
use crate::units::kelvin_to_celsius;

/// Worst-case deviation of a reduced model from the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub max_abs_error_k: f64,
    /// `|ΔT| / max(|T_plant| in °C, 1 °C)`, in percent.
    pub max_rel_error_pct: f64,
}

/// Compares `rom` against `plant` on the plant's sample times inside the
/// overlap of both time ranges. The reduced trajectory is read under
/// zero-order hold, so the two need not share a time base.
pub fn metric_errors(rom: &SimulationResult, plant: &SimulationResult) -> Result<ErrorMetrics> {
    metric_errors_until(rom, plant, f64::INFINITY)
}

/// [`metric_errors`] restricted to plant samples with `t <= until`.
pub fn metric_errors_until(
    rom: &SimulationResult,
    plant: &SimulationResult,
    until: f64,
) -> Result<ErrorMetrics> {
    let (Some(&rom_end), Some(&rom_start)) = (rom.t.last(), rom.t.first()) else {
        return Err(Error::Domain("reduced trajectory is empty".into()));
    };
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut compared = 0usize;
    for (&t, &reference) in plant.t.iter().zip(&plant.t_avg) {
        if t < rom_start || t > rom_end || t > until {
            continue;
        }
        let Some(value) = rom.t_avg_at(t) else {
            continue;
        };
        let err = (value - reference).abs();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / kelvin_to_celsius(reference).abs().max(1.0) * 100.0);
        compared += 1;
    }
    if compared == 0 {
        return Err(Error::Domain("trajectories do not overlap in time".into()));
    }
    if !(max_abs.is_finite() && max_rel.is_finite()) {
        return Err(Error::Numeric("error metrics are not finite".into()));
    }
    Ok(ErrorMetrics {
        max_abs_error_k: max_abs,
        max_rel_error_pct: max_rel,
    })
}

fn mean_std(series: &[f64]) -> Result<(f64, f64)> {
    if series.is_empty() {
        return Err(Error::Domain("series is empty".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Population standard deviation (divides by `n`).
pub fn std_dev(series: &[f64]) -> Result<f64> {
    mean_std(series).map(|(_, s)| s)
}

/// Coefficient of variation in percent, using the population standard deviation.
pub fn cov(series: &[f64]) -> Result<f64> {
    let (mean, std) = mean_std(series)?;
    if mean == 0.0 {
        return Err(Error::Domain(
            "coefficient of variation of a zero-mean series".into(),
        ));
    }
    Ok(std / mean.abs() * 100.0)
}
