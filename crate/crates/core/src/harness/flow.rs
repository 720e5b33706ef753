use crate::error::{Error, Result};
use crate::profile::Profile;

/// Flow profile that follows `q_profile` affinely:
/// `ṁ(t) = m̄·(1 + α·(q̇(t) − q̄)/σ_q)` with `α = target_cov_pct / 100`.
///
/// Mean and standard deviation are time-weighted over `[0, horizon]`, so the
/// result has exactly mean `m̄` and coefficient of variation `target_cov_pct`
/// over that window. A target that would need negative flow is rejected; the
/// map is never clipped because clipping would move both moments.
pub fn make_proportional_flow(
    q_profile: &Profile,
    horizon: f64,
    mean_flow: f64,
    target_cov_pct: f64,
) -> Result<Profile> {
    if !(mean_flow > 0.0 && mean_flow.is_finite()) {
        return Err(Error::Domain(format!("mean flow {mean_flow} must be > 0")));
    }
    if !(target_cov_pct >= 0.0 && target_cov_pct.is_finite()) {
        return Err(Error::Domain(format!(
            "target CoV {target_cov_pct}% must be >= 0"
        )));
    }
    if target_cov_pct == 0.0 {
        return Ok(Profile::constant(mean_flow));
    }
    let (q_mean, q_std) = q_profile.time_stats(horizon)?;
    if !(q_std > 0.0) {
        return Err(Error::Domain(
            "heat profile is constant; a varying flow cannot follow it".into(),
        ));
    }
    let alpha = target_cov_pct / 100.0;
    let flow = q_profile.map(|q| mean_flow * (1.0 + alpha * (q - q_mean) / q_std));
    let lowest = flow.min_value();
    if lowest < 0.0 {
        let max_cov = 100.0 * q_std / (q_mean - q_profile.min_value());
        return Err(Error::Domain(format!(
            "CoV {target_cov_pct}% needs negative flow ({lowest:e} kg/s); at most {max_cov:.3}% is attainable"
        )));
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sampled(p: &Profile, horizon: f64, dt: f64) -> Vec<f64> {
        let n = (horizon / dt).round() as usize;
        (0..n).map(|k| p.value_at(k as f64 * dt)).collect()
    }

    #[test]
    fn zero_target_is_constant() {
        let q = Profile::from_segments(&[(10.0, 1e5), (10.0, 3e5)]).unwrap();
        let m = make_proportional_flow(&q, 20.0, 8e-4, 0.0).unwrap();
        assert_eq!(m, Profile::constant(8e-4));
    }

    #[test]
    fn moments_match_targets() {
        let q = Profile::from_segments(&[(30.0, 1e5), (50.0, 4e5), (20.0, 2e6)]).unwrap();
        for target in [2.8, 8.4, 14.0] {
            let m = make_proportional_flow(&q, 100.0, 8e-4, target).unwrap();
            let s = sampled(&m, 100.0, 0.5);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            assert!((mean - 8e-4).abs() < 1e-15);
            assert!((crate::harness::cov(&s).unwrap() - target).abs() < 1e-9);
        }
    }

    #[test]
    fn unattainable_target_is_an_error() {
        let q = Profile::from_segments(&[(90.0, 1e6), (10.0, 0.0)]).unwrap();
        assert!(matches!(
            make_proportional_flow(&q, 100.0, 8e-4, 50.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constant_heat_cannot_carry_variation() {
        let q = Profile::constant(1e5);
        assert!(make_proportional_flow(&q, 100.0, 8e-4, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn successful_output_meets_both_targets(
            values in proptest::collection::vec(1e4f64..5e6, 2..20),
            target in 0.0f64..20.0,
        ) {
            let segs: Vec<(f64, f64)> = values.iter().map(|&v| (10.0, v)).collect();
            let horizon = 10.0 * segs.len() as f64;
            let q = Profile::from_segments(&segs).unwrap();
            if let Ok(m) = make_proportional_flow(&q, horizon, 8e-4, target) {
                let (mean, std) = m.time_stats(horizon).unwrap();
                prop_assert!((mean - 8e-4).abs() < 1e-12);
                prop_assert!((std / mean * 100.0 - target).abs() < 1e-6);
                prop_assert!(m.min_value() >= 0.0);
            }
        }
    }
}
