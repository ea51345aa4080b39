//! Tracking error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::UeState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{truth} truth states but {estimates} estimates")]
    LengthMismatch { truth: usize, estimates: usize },
}

/// Errors of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepErrors {
    /// Euclidean position error (m).
    pub position: f64,
    /// Euclidean velocity error (m/s).
    pub velocity: f64,
    /// Geodesic orientation error (rad).
    pub orientation: f64,
}

pub fn step_errors(truth: &UeState, estimate: &UeState) -> StepErrors {
    StepErrors {
        position: (estimate.position - truth.position).norm(),
        velocity: (estimate.velocity - truth.velocity).norm(),
        orientation: estimate.orientation.angle_to(&truth.orientation),
    }
}

pub fn compute_metrics(truth: &[UeState], estimates: &[UeState]) -> Result<Vec<StepErrors>, MetricsError> {
    if truth.len() != estimates.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), estimates: estimates.len() });
    }
    Ok(truth.iter().zip(estimates).map(|(t, e)| step_errors(t, e)).collect())
}

/// Root mean square; `NaN` for an empty sample.
pub fn rmse<I: IntoIterator<Item = f64>>(errors: I) -> f64 {
    let (sum, n) = errors.into_iter().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Empirical CDF as sorted `(value, probability)` pairs.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::RotationMatrix;
    use approx::assert_relative_eq;
    use nalgebra::{DVector, Vector3};

    fn state() -> UeState {
        UeState {
            position: Vector3::new(1.0, 2.0, 3.0),
            velocity: Vector3::new(4.0, 0.0, 0.0),
            bias: DVector::zeros(2),
            orientation: RotationMatrix::from_euler_zyx(0.3, 0.2, 0.1),
        }
    }

    #[test]
    fn perfect_estimates_have_zero_error() {
        let t = vec![state(); 3];
        let e = compute_metrics(&t, &t).unwrap();
        assert!(e.iter().all(|x| x.position == 0.0 && x.velocity == 0.0 && x.orientation == 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = state();
        let mut e = t.clone();
        e.orientation = t.orientation.compose(&RotationMatrix::from_euler_zyx(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(step_errors(&t, &e).orientation, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(compute_metrics(&[state()], &[]), Err(MetricsError::LengthMismatch { truth: 1, estimates: 0 }));
    }

    #[test]
    fn rmse_of_constant_error() {
        assert_relative_eq!(rmse(vec![0.7; 11]), 0.7, epsilon = 1e-15);
        assert!(rmse(Vec::new()).is_nan());
    }

    #[test]
    fn cdf_reaches_one_at_maximum() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.last().unwrap(), &(3.0, 1.0));
        assert_eq!(c[0], (1.0, 0.25));
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }
}
