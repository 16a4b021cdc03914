//! Convergence diagnostics over the recorded error series.

use thiserror::Error;

use crate::engine::Trajectory;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("trajectory has {got} recorded errors, need {need}")]
    TooShort { got: usize, need: usize },
    #[error("squared error at t={t} is not positive; cannot take its log")]
    NonPositive { t: u64 },
}

/// Mean squared error over the last `window` recorded points.
pub fn plateau_estimate<T: Scalar>(traj: &Trajectory<T>, window: usize) -> Result<T, StatsError> {
    let series = traj.err_series();
    if window == 0 || series.len() < window {
        return Err(StatsError::TooShort { got: series.len(), need: window.max(1) });
    }
    let tail = &series[series.len() - window..];
    let sum = tail.iter().fold(T::zero(), |acc, &(_, e)| acc + e);
    Ok(sum / T::from_usize_lossy(window))
}

/// Least-squares slope of `ln err_sq` against `t` over recorded points with
/// `t_start <= t <= t_end`: the per-iteration log contraction rate.
pub fn slope_fit<T: Scalar>(traj: &Trajectory<T>, t_start: u64, t_end: u64) -> Result<f64, StatsError> {
    let pts: Vec<(f64, f64)> = traj
        .err_series()
        .into_iter()
        .filter(|&(t, _)| t >= t_start && t <= t_end)
        .map(|(t, e)| {
            let e = e.as_f64();
            if e > 0.0 {
                Ok((t as f64, e.ln()))
            } else {
                Err(StatsError::NonPositive { t })
            }
        })
        .collect::<Result<_, _>>()?;
    if pts.len() < 3 {
        return Err(StatsError::TooShort { got: pts.len(), need: 3 });
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sty, mut stt) = (0.0, 0.0);
    for &(t, y) in &pts {
        sty += (t - mt) * (y - my);
        stt += (t - mt) * (t - mt);
    }
    Ok(sty / stt)
}

/// Last recorded `t` before the error first comes within `factor` times `level`.
pub fn pre_plateau_end<T: Scalar>(traj: &Trajectory<T>, level: T, factor: T) -> Option<u64> {
    let series = traj.err_series();
    let first = series.iter().position(|&(_, e)| e <= factor * level)?;
    first.checked_sub(1).map(|k| series[k].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TrajectoryPoint;

    fn traj(errs: &[(u64, f64)]) -> Trajectory<f64> {
        let points = errs
            .iter()
            .map(|&(t, e)| TrajectoryPoint {
                t,
                prices: vec![1.0],
                err_sq: Some(e),
                phi: 0.0,
                z_norm1: 0.0,
                min_price: 1.0,
                max_price: 1.0,
                violations: 0,
            })
            .collect();
        Trajectory { points, monitored: false, violations: 0, projections: 0, final_prices: vec![1.0] }
    }

    #[test]
    fn constant_series() {
        let tr = traj(&(0..10).map(|t| (t, 0.3)).collect::<Vec<_>>());
        assert_eq!(plateau_estimate(&tr, 4).unwrap(), 0.3);
        assert_eq!(slope_fit(&tr, 0, 9).unwrap(), 0.0);
    }

    #[test]
    fn geometric_series_recovers_rate() {
        let r: f64 = 0.97;
        let tr = traj(&(0..200).map(|t| (t * 5, 2.5 * r.powi(t as i32 * 5))).collect::<Vec<_>>());
        assert!((slope_fit(&tr, 0, 1000).unwrap() - r.ln()).abs() < 1e-9);
        assert!((slope_fit(&tr, 100, 400).unwrap() - r.ln()).abs() < 1e-9);
    }

    #[test]
    fn decreasing_series_plateau_below_window_start() {
        let tr = traj(&(0..50).map(|t| (t, 1.0 / (1.0 + t as f64))).collect::<Vec<_>>());
        let window = 10;
        assert!(plateau_estimate(&tr, window).unwrap() < 1.0 / (1.0 + 40.0));
    }

    #[test]
    fn degenerate_inputs() {
        let tr = traj(&[(0, 1.0), (1, 0.0), (2, 0.5)]);
        assert_eq!(plateau_estimate(&tr, 4), Err(StatsError::TooShort { got: 3, need: 4 }));
        assert_eq!(slope_fit(&tr, 0, 2), Err(StatsError::NonPositive { t: 1 }));
        assert_eq!(slope_fit(&tr, 2, 2), Err(StatsError::TooShort { got: 1, need: 3 }));
    }

    #[test]
    fn pre_plateau_segment() {
        let tr = traj(&[(0, 8.0), (10, 4.0), (20, 2.0), (30, 1.0), (40, 1.0)]);
        assert_eq!(pre_plateau_end(&tr, 1.0, 2.0), Some(10));
        assert_eq!(pre_plateau_end(&tr, 8.0, 2.0), None);
    }
}
