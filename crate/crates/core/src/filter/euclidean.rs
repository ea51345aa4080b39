//! Baseline UKF that treats the orientation as nine free entries.
//!
//! The state is `[p, v, b, vec(R)]` in `R^(S+15)` with `vec` stacking the
//! columns. Updates may leave `R` off the rotation group; the estimate is
//! projected to the nearest rotation only for evaluation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{
    linear_update, observation_stats, process_noise, ukf_weights, weighted_covariance_sum, weighted_outer, BeliefMode,
    CrossCovariance, FilterConfig, FilterError, ImuSample, Measurement, StepInput,
};
use crate::geometry::UserView;
use crate::linalg::{psd_lower_factor, psd_project, symmetrize};
use crate::manifold::{RotationMatrix, UeState};

/// Estimate of the unconstrained filter.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanState {
    pub x: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Unpacked view of a state vector.
pub struct Unpacked {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub bias: DVector<f64>,
    pub rotation: Matrix3<f64>,
}

impl Unpacked {
    pub fn view(&self) -> UserView<'_> {
        UserView { position: &self.position, velocity: &self.velocity, bias: &self.bias, rotation: &self.rotation }
    }
}

fn num_sats(x: &DVector<f64>) -> usize {
    x.len() - 15
}

pub fn pack(p: &Vector3<f64>, v: &Vector3<f64>, b: &DVector<f64>, r: &Matrix3<f64>) -> DVector<f64> {
    let s = b.len();
    let mut x = DVector::zeros(s + 15);
    x.fixed_rows_mut::<3>(0).copy_from(p);
    x.fixed_rows_mut::<3>(3).copy_from(v);
    x.rows_mut(6, s).copy_from(b);
    x.rows_mut(6 + s, 9).copy_from_slice(r.as_slice());
    x
}

pub fn unpack(x: &DVector<f64>) -> Unpacked {
    let s = num_sats(x);
    Unpacked {
        position: x.fixed_rows::<3>(0).into_owned(),
        velocity: x.fixed_rows::<3>(3).into_owned(),
        bias: x.rows(6, s).into_owned(),
        rotation: Matrix3::from_column_slice(x.rows(6 + s, 9).as_slice()),
    }
}

impl EuclideanState {
    /// Exact embedding of a manifold state with zero covariance.
    pub fn from_state(z: &UeState) -> Self {
        let x = pack(&z.position, &z.velocity, &z.bias, z.orientation.matrix());
        let n = x.len();
        Self { x, cov: DMatrix::zeros(n, n) }
    }

    /// Estimate with the orientation block replaced by its polar projection.
    pub fn projected(&self) -> UeState {
        let u = unpack(&self.x);
        UeState { position: u.position, velocity: u.velocity, bias: u.bias, orientation: polar_projection(&u.rotation) }
    }
}

/// Nearest rotation in Frobenius norm, `U diag(1, 1, det(U V^T)) V^T`.
pub fn polar_projection(m: &Matrix3<f64>) -> RotationMatrix {
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return RotationMatrix::identity(),
    };
    let d = (u * vt).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    RotationMatrix::try_from_matrix(u * fix * vt).unwrap_or_else(|_| RotationMatrix::identity())
}

/// Process noise on `R^(S+15)`: the manifold filter's translational blocks
/// and `||C_omega||_F / (2 pi)` on each of the nine rotation entries.
pub fn euclidean_process_noise(num_sats: usize, cfg: &FilterConfig) -> DMatrix<f64> {
    let n = num_sats + 15;
    let base = process_noise(num_sats, cfg);
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (6, 6)).copy_from(&base.view((0, 0), (6, 6)));
    let level = cfg.rot_cov.norm() / (2.0 * std::f64::consts::PI);
    for i in 0..9 {
        q[(6 + num_sats + i, 6 + num_sats + i)] = level;
    }
    q
}

pub fn propagate(x: &DVector<f64>, imu: &ImuSample, dt: f64) -> DVector<f64> {
    let u = unpack(x);
    pack(
        &(u.position + u.velocity * dt + imu.accel * (0.5 * dt * dt)),
        &(u.velocity + imu.accel * dt),
        &u.bias,
        &(u.rotation * imu.rotation.matrix()),
    )
}

fn sigma_points(x: &DVector<f64>, cov: &DMatrix<f64>, spread: f64) -> Vec<DVector<f64>> {
    let n = x.len();
    let l = psd_lower_factor(&(cov * spread));
    let mut pts = Vec::with_capacity(2 * n + 1);
    pts.push(x.clone());
    for i in 0..n {
        pts.push(x + l.column(i));
        pts.push(x - l.column(i));
    }
    pts
}

/// Weighted mean accumulated relative to the first point.
fn weighted_mean(pts: &[DVector<f64>], w: &[f64]) -> DVector<f64> {
    let mut shift = DVector::zeros(pts[0].len());
    for (p, &wi) in pts.iter().zip(w).skip(1) {
        shift += (p - &pts[0]) * wi;
    }
    &pts[0] + shift
}

pub struct EuclideanPrediction {
    pub state: EuclideanState,
    pub deviations: Vec<DVector<f64>>,
}

pub fn time_update(
    state: &EuclideanState,
    imu: &ImuSample,
    cfg: &FilterConfig,
) -> Result<EuclideanPrediction, FilterError> {
    let n = state.x.len();
    let w = ukf_weights(n, cfg.alpha, cfg.beta, cfg.kappa)?;
    let pts: Vec<_> = sigma_points(&state.x, &state.cov, w.spread).iter().map(|p| propagate(p, imu, cfg.dt)).collect();
    let mean = weighted_mean(&pts, &w.mean);
    let deviations: Vec<_> = pts.iter().map(|p| p - &mean).collect();
    let cov = weighted_outer(&deviations, &deviations, &w.cov) + euclidean_process_noise(num_sats(&state.x), cfg);
    let cov = psd_project(&symmetrize(&cov));
    if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
        return Err(FilterError::NonFinite("predicted covariance"));
    }
    Ok(EuclideanPrediction { state: EuclideanState { x: mean, cov }, deviations })
}

pub fn measurement_update(
    prediction: &EuclideanPrediction,
    meas: &Measurement,
    cfg: &FilterConfig,
) -> Result<EuclideanState, FilterError> {
    let m = meas.model.dim();
    if meas.observation.len() != m {
        return Err(FilterError::ObservationSize { expected: m, got: meas.observation.len() });
    }
    let prior = &prediction.state;
    let n = prior.x.len();
    let w = ukf_weights(n, cfg.alpha, cfg.beta, cfg.kappa)?;
    let pts = sigma_points(&prior.x, &prior.cov, w.spread);
    let unpacked: Vec<Unpacked> = pts.iter().map(unpack).collect();
    let images = unpacked.iter().map(|u| meas.model.predict(u.view())).collect::<Result<Vec<_>, _>>()?;
    let stats = observation_stats(&images, &w.mean, meas.model.azimuth_indices(), cfg.wrap_azimuth);
    let belief = match cfg.belief {
        BeliefMode::Identity => DMatrix::identity(m, m),
        BeliefMode::Oracle => meas.oracle.cloned().ok_or(FilterError::MissingOracle)?,
        BeliefMode::FimApprox => {
            let covs = unpacked.iter().map(|u| meas.model.covariance(u.view())).collect::<Result<Vec<_>, _>>()?;
            weighted_covariance_sum(&covs, &w.cov, meas.epsilon)
        }
    };
    let state_devs: Vec<DVector<f64>> = match cfg.cross_covariance {
        CrossCovariance::MeasurementSet => pts.iter().map(|p| p - &prior.x).collect(),
        CrossCovariance::PropagatedSet => prediction.deviations.clone(),
    };
    let upd = linear_update(
        &prior.cov,
        &state_devs,
        &stats.deviations,
        &w.cov,
        &stats.mean,
        &belief,
        meas,
        cfg.wrap_azimuth,
    )?;
    Ok(EuclideanState { x: &prior.x + upd.correction, cov: upd.cov })
}

/// Runs the baseline over a timeline; the output starts with `initial`.
pub fn track<'a, I>(
    initial: EuclideanState,
    timeline: I,
    cfg: &FilterConfig,
) -> Result<Vec<EuclideanState>, FilterError>
where
    I: IntoIterator<Item = StepInput<'a>>,
{
    let mut out = vec![initial];
    for (n, step) in timeline.into_iter().enumerate() {
        let wrap = |e: FilterError| FilterError::Step { step: n + 1, source: Box::new(e) };
        let prev = out.last().expect("non-empty");
        let pred = time_update(prev, &step.imu, cfg).map_err(wrap)?;
        let meas = Measurement {
            observation: &step.observation,
            model: step.model,
            epsilon: step.epsilon,
            oracle: step.oracle.as_ref(),
        };
        out.push(measurement_update(&pred, &meas, cfg).map_err(wrap)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pack_roundtrip_is_column_major() {
        let r = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        let b = DVector::from_vec(vec![0.1, 0.2]);
        let x = pack(&Vector3::new(1.0, 2.0, 3.0), &Vector3::zeros(), &b, &r);
        assert_eq!(x.len(), 17);
        assert_eq!(x[8], 1.0);
        assert_eq!(x[9], 4.0);
        assert_eq!(x[11], 2.0);
        let u = unpack(&x);
        assert_eq!(u.rotation, r);
        assert_eq!(u.bias, b);
    }

    #[test]
    fn polar_projection_of_rotation_is_itself() {
        let r = RotationMatrix::from_euler_zyx(0.4, -0.3, 1.1);
        assert_relative_eq!(*polar_projection(r.matrix()).matrix(), *r.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn polar_projection_removes_scaling_and_shear() {
        let r = RotationMatrix::from_euler_zyx(0.4, -0.3, 1.1);
        let m = r.matrix() * Matrix3::new(1.1, 0.02, 0.0, 0.02, 0.95, 0.01, 0.0, 0.01, 1.05);
        let p = polar_projection(&m);
        assert!(p.angle_to(&r) < 0.05);
        assert!(crate::manifold::orthonormality_error(p.matrix()) < 1e-12);
    }

    #[test]
    fn rotation_noise_level() {
        let cfg = FilterConfig::default();
        let q = euclidean_process_noise(2, &cfg);
        let want = cfg.rot_cov.norm() / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(q[(8, 8)], want, max_relative = 1e-12);
        assert_relative_eq!(q[(16, 16)], want, max_relative = 1e-12);
        assert_eq!(q[(6, 6)], 0.0);
    }

    #[test]
    fn time_update_keeps_exact_rotation_product() {
        let z = UeState {
            position: Vector3::zeros(),
            velocity: Vector3::new(1.0, 0.0, 0.0),
            bias: DVector::zeros(1),
            orientation: RotationMatrix::from_euler_zyx(0.2, 0.0, 0.0),
        };
        let st = EuclideanState::from_state(&z);
        let imu = ImuSample { accel: Vector3::zeros(), rotation: RotationMatrix::from_euler_zyx(0.1, 0.0, 0.0) };
        let pred = time_update(&st, &imu, &FilterConfig::default()).unwrap();
        let want = RotationMatrix::from_euler_zyx(0.3, 0.0, 0.0);
        assert_relative_eq!(unpack(&pred.state.x).rotation, *want.matrix(), epsilon = 1e-12);
    }
}
