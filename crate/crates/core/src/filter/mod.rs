//! Unscented Kalman filtering on the user-state manifold.
//!
//! Sigma points are generated with boxplus from the lower-triangular factor
//! of the scaled covariance, propagated through the IMU process model and
//! recombined with the weighted manifold mean. The measurement update uses
//! the channel-parameter observation model and a belief covariance that can
//! be the identity, the sigma-point average of inverse FIMs, or the exact
//! observation covariance.

pub mod euclidean;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fim::FimError;
use crate::geometry::UserView;
use crate::linalg::{psd_lower_factor, psd_project, spd_inverse, symmetrize, wrap_angle};
use crate::manifold::{manifold_mean, ManifoldError, RotationMatrix, TangentVector, UeState, WeightedPointSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("sigma-point spread N + lambda = {0} is not positive")]
    DegenerateSpread(f64),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Model(#[from] FimError),
    #[error("innovation covariance is not positive definite")]
    InnovationNotInvertible,
    #[error("observation has {got} entries, model expects {expected}")]
    ObservationSize { expected: usize, got: usize },
    #[error("oracle belief requested without an oracle covariance")]
    MissingOracle,
    #[error("non-finite value in the {0}")]
    NonFinite(&'static str),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<FilterError>,
    },
}

/// How the observation covariance used in the update is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefMode {
    Identity,
    FimApprox,
    Oracle,
}

impl BeliefMode {
    pub fn name(&self) -> &'static str {
        match self {
            BeliefMode::Identity => "identity",
            BeliefMode::FimApprox => "fim_approx",
            BeliefMode::Oracle => "oracle",
        }
    }
}

/// Which tangent deviations pair with the observation deviations in the
/// state-observation cross-covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCovariance {
    /// Deviations of the measurement sigma points `x_i` from the predicted
    /// mean, the points whose images enter the observation deviations.
    MeasurementSet,
    /// Deviations of the propagated time-update points `f(z_i)`.
    PropagatedSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Accelerometer noise covariance (m^2/s^4).
    pub accel_cov: Matrix3<f64>,
    /// Rotation-increment noise covariance (rad^2).
    pub rot_cov: Matrix3<f64>,
    /// IMU interval in seconds.
    pub dt: f64,
    pub belief: BeliefMode,
    /// Wrap azimuth innovations into (-pi, pi].
    pub wrap_azimuth: bool,
    pub cross_covariance: CrossCovariance,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let sa = 0.2;
        let sw = 2f64.to_radians();
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            accel_cov: Matrix3::identity() * (sa * sa),
            rot_cov: Matrix3::identity() * (sw * sw),
            dt: 1.0,
            belief: BeliefMode::FimApprox,
            wrap_azimuth: true,
            cross_covariance: CrossCovariance::MeasurementSet,
        }
    }
}

/// Unscented weights for dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfWeights {
    pub lambda: f64,
    /// `N + lambda`, the squared sigma-point spread.
    pub spread: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

/// `lambda = alpha^2 (n + kappa) - n`, `W0m = lambda / (n + lambda)`,
/// `W0c = W0m + 1 - alpha^2 + beta`, `Wi = 1 / (2 (n + lambda))`.
pub fn ukf_weights(n: usize, alpha: f64, beta: f64, kappa: f64) -> Result<UkfWeights, FilterError> {
    let nf = n as f64;
    let lambda = alpha * alpha * (nf + kappa) - nf;
    let spread = nf + lambda;
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(FilterError::DegenerateSpread(spread));
    }
    let w0m = lambda / spread;
    let w0c = w0m + 1.0 - alpha * alpha + beta;
    let wi = 1.0 / (2.0 * spread);
    let mut mean = vec![wi; 2 * n + 1];
    let mut cov = vec![wi; 2 * n + 1];
    mean[0] = w0m;
    cov[0] = w0c;
    Ok(UkfWeights { lambda, spread, mean, cov })
}

/// Filter estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: UeState,
    /// Tangent-space covariance of size `S + 9`.
    pub cov: DMatrix<f64>,
}

/// IMU reading over one interval: acceleration in the global frame and the
/// measured rotation increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub accel: Vector3<f64>,
    pub rotation: RotationMatrix,
}

/// Maps user states to the observation vector and, for the FIM-based belief,
/// to the observation covariance at that state.
pub trait ObservationModel: Sync {
    fn dim(&self) -> usize;
    fn azimuth_indices(&self) -> &[usize];
    fn predict(&self, user: UserView) -> Result<DVector<f64>, FimError>;
    /// Inverse FIM (with floor variances for uninformative entries).
    fn covariance(&self, user: UserView) -> Result<DMatrix<f64>, FimError>;
}

/// Symmetric sigma set `{x, x [+] c_i, x [+] -c_i}` where `c_i` are the
/// columns of the lower factor of `(N + lambda) P`.
pub fn generate_sigma_points(state: &FilterState, weights: &UkfWeights) -> Result<WeightedPointSet, FilterError> {
    let n = state.mean.dim();
    if state.cov.nrows() != n {
        return Err(ManifoldError::DimensionMismatch { expected: n, got: state.cov.nrows() }.into());
    }
    let l = psd_lower_factor(&(&state.cov * weights.spread));
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(state.mean.clone());
    for sign in [1.0, -1.0] {
        for i in 0..n {
            let col = TangentVector(l.column(i) * sign);
            points.push(state.mean.boxplus(&col)?);
        }
    }
    // order the set as x, +c_0, -c_0, +c_1, ...
    let (plus, minus) = points.split_at(1 + n);
    let mut ordered = vec![points[0].clone()];
    for i in 0..n {
        ordered.push(plus[1 + i].clone());
        ordered.push(minus[i].clone());
    }
    Ok(WeightedPointSet { points: ordered, mean_weights: weights.mean.clone(), cov_weights: weights.cov.clone() })
}

/// Deterministic process model.
pub fn propagate(z: &UeState, imu: &ImuSample, dt: f64) -> UeState {
    UeState {
        position: z.position + z.velocity * dt + imu.accel * (0.5 * dt * dt),
        velocity: z.velocity + imu.accel * dt,
        bias: z.bias.clone(),
        orientation: z.orientation.compose(&imu.rotation),
    }
}

/// Tangent-space process noise: white acceleration on `(p, v)`, nothing on
/// the biases, `C_omega` on the rotation.
pub fn process_noise(num_sats: usize, cfg: &FilterConfig) -> DMatrix<f64> {
    let n = num_sats + 9;
    let dt = cfg.dt;
    let mut q = DMatrix::zeros(n, n);
    let ca = &cfg.accel_cov;
    q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ca * (dt.powi(4) / 4.0)));
    q.fixed_view_mut::<3, 3>(0, 3).copy_from(&(ca * (dt.powi(3) / 2.0)));
    q.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ca * (dt.powi(3) / 2.0)));
    q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(ca * (dt * dt)));
    q.fixed_view_mut::<3, 3>(6 + num_sats, 6 + num_sats).copy_from(&cfg.rot_cov);
    q
}

/// Output of [`time_update`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub state: FilterState,
    /// `f(z_i) [-] mean` for the propagated time-update points.
    pub deviations: Vec<DVector<f64>>,
}

pub(crate) fn weighted_outer(devs: &[DVector<f64>], other: &[DVector<f64>], w: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(devs[0].len(), other[0].len());
    for ((a, b), &wi) in devs.iter().zip(other).zip(w) {
        m += a * b.transpose() * wi;
    }
    m
}

/// Propagates the estimate through one IMU interval.
pub fn time_update(state: &FilterState, imu: &ImuSample, cfg: &FilterConfig) -> Result<Prediction, FilterError> {
    let n = state.mean.dim();
    let w = ukf_weights(n, cfg.alpha, cfg.beta, cfg.kappa)?;
    let set = generate_sigma_points(state, &w)?;
    let propagated: Vec<UeState> = set.points.iter().map(|z| propagate(z, imu, cfg.dt)).collect();
    let mean = manifold_mean(&propagated, &set.mean_weights)?;
    let deviations = propagated.iter().map(|p| p.boxminus(&mean).map(|d| d.0)).collect::<Result<Vec<_>, _>>()?;
    let cov = weighted_outer(&deviations, &deviations, &set.cov_weights) + process_noise(mean.num_sats(), cfg);
    let cov = psd_project(&symmetrize(&cov));
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(FilterError::NonFinite("predicted covariance"));
    }
    Ok(Prediction { state: FilterState { mean, cov }, deviations })
}

fn wrap_in_place(v: &mut DVector<f64>, idx: &[usize], enabled: bool) {
    if enabled {
        for &i in idx {
            v[i] = wrap_angle(v[i]);
        }
    }
}

/// Belief covariance for the measurement update.
///
/// `Identity` returns `I`; `FimApprox` returns
/// `eps I + sum_i wc_i Sigma(x_i)` over the measurement sigma points;
/// `Oracle` returns the supplied true observation covariance.
pub fn belief_assignment(
    points: &WeightedPointSet,
    epsilon: f64,
    mode: BeliefMode,
    model: &dyn ObservationModel,
    oracle: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>, FilterError> {
    let m = model.dim();
    match mode {
        BeliefMode::Identity => Ok(DMatrix::identity(m, m)),
        BeliefMode::Oracle => oracle.cloned().ok_or(FilterError::MissingOracle),
        BeliefMode::FimApprox => {
            let covs = points.points.iter().map(|x| model.covariance(x.into())).collect::<Result<Vec<_>, _>>()?;
            Ok(weighted_covariance_sum(&covs, &points.cov_weights, epsilon))
        }
    }
}

/// `eps I + sum_i w_i S_i`, accumulated relative to `S_0` so that large
/// opposite-sign weights do not cancel leading digits. The weighted sum is
/// indefinite when the spread of the points resolves curvature of `S`; it is
/// projected before `eps I` is added so the floor survives the projection.
pub(crate) fn weighted_covariance_sum(covs: &[DMatrix<f64>], w: &[f64], epsilon: f64) -> DMatrix<f64> {
    let m = covs[0].nrows();
    let wsum: f64 = w.iter().sum();
    let mut acc = &covs[0] * wsum;
    for (c, &wi) in covs.iter().zip(w).skip(1) {
        acc += (c - &covs[0]) * wi;
    }
    psd_project(&symmetrize(&acc)) + DMatrix::identity(m, m) * epsilon
}

/// Inputs of one measurement update.
pub struct Measurement<'a> {
    pub observation: &'a DVector<f64>,
    pub model: &'a dyn ObservationModel,
    pub epsilon: f64,
    pub oracle: Option<&'a DMatrix<f64>>,
}

/// Quantities of a measurement update, for inspection and tests.
#[derive(Debug, Clone)]
pub struct UpdateDetails {
    pub state: FilterState,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub belief: DMatrix<f64>,
}

/// Observation statistics of a sigma set relative to its centre image.
pub(crate) struct ObsStats {
    pub mean: DVector<f64>,
    pub deviations: Vec<DVector<f64>>,
}

pub(crate) fn observation_stats(images: &[DVector<f64>], w: &[f64], az: &[usize], wrap: bool) -> ObsStats {
    let h0 = &images[0];
    let mut rel: Vec<DVector<f64>> = images
        .iter()
        .map(|h| {
            let mut d = h - h0;
            wrap_in_place(&mut d, az, wrap);
            d
        })
        .collect();
    let mut shift = DVector::zeros(h0.len());
    for (d, &wi) in rel.iter().zip(w) {
        shift += d * wi;
    }
    for d in rel.iter_mut() {
        *d -= &shift;
    }
    let mut mean = h0 + shift;
    wrap_in_place(&mut mean, az, wrap);
    ObsStats { mean, deviations: rel }
}

/// Kalman gain, innovation and posterior shared by both filter variants.
pub(crate) struct LinearUpdate {
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub correction: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub(crate) fn linear_update(
    prior_cov: &DMatrix<f64>,
    state_devs: &[DVector<f64>],
    obs_devs: &[DVector<f64>],
    wc: &[f64],
    predicted_obs: &DVector<f64>,
    belief: &DMatrix<f64>,
    meas: &Measurement,
    wrap: bool,
) -> Result<LinearUpdate, FilterError> {
    let q = symmetrize(&(weighted_outer(obs_devs, obs_devs, wc) + belief));
    let cross = weighted_outer(state_devs, obs_devs, wc);
    let inv = spd_inverse(&q).ok_or(FilterError::InnovationNotInvertible)?;
    let gain = &cross * &inv.inverse;
    let mut innovation = meas.observation - predicted_obs;
    wrap_in_place(&mut innovation, meas.model.azimuth_indices(), wrap);
    let correction = &gain * &innovation;
    let cov = psd_project(&symmetrize(&(prior_cov - &gain * &q * gain.transpose())));
    if correction.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
        return Err(FilterError::NonFinite("posterior"));
    }
    Ok(LinearUpdate { gain, innovation, innovation_cov: q, correction, cov })
}

/// Measurement update of a prediction with one observation vector.
pub fn measurement_update(
    prediction: &Prediction,
    meas: &Measurement,
    cfg: &FilterConfig,
) -> Result<UpdateDetails, FilterError> {
    let m = meas.model.dim();
    if meas.observation.len() != m {
        return Err(FilterError::ObservationSize { expected: m, got: meas.observation.len() });
    }
    let prior = &prediction.state;
    let n = prior.mean.dim();
    let w = ukf_weights(n, cfg.alpha, cfg.beta, cfg.kappa)?;
    let set = generate_sigma_points(prior, &w)?;
    let images = set.points.iter().map(|x| meas.model.predict(x.into())).collect::<Result<Vec<_>, _>>()?;
    let stats = observation_stats(&images, &set.mean_weights, meas.model.azimuth_indices(), cfg.wrap_azimuth);
    let belief = belief_assignment(&set, meas.epsilon, cfg.belief, meas.model, meas.oracle)?;
    let state_devs: Vec<DVector<f64>> = match cfg.cross_covariance {
        CrossCovariance::MeasurementSet => {
            set.points.iter().map(|x| x.boxminus(&prior.mean).map(|d| d.0)).collect::<Result<_, _>>()?
        }
        CrossCovariance::PropagatedSet => prediction.deviations.clone(),
    };
    let upd = linear_update(
        &prior.cov,
        &state_devs,
        &stats.deviations,
        &set.cov_weights,
        &stats.mean,
        &belief,
        meas,
        cfg.wrap_azimuth,
    )?;
    let mean = prior.mean.boxplus(&TangentVector(upd.correction))?;
    Ok(UpdateDetails {
        state: FilterState { mean, cov: upd.cov },
        gain: upd.gain,
        innovation: upd.innovation,
        innovation_cov: upd.innovation_cov,
        belief,
    })
}

/// One entry of a tracking timeline: the IMU reading that leads to the step
/// and the observation taken at it.
pub struct StepInput<'a> {
    pub imu: ImuSample,
    pub observation: DVector<f64>,
    pub model: &'a dyn ObservationModel,
    pub epsilon: f64,
    pub oracle: Option<DMatrix<f64>>,
}

/// Runs the filter over a timeline. The output starts with `initial`, so an
/// empty timeline returns only the initial state.
pub fn track<'a, I>(initial: FilterState, timeline: I, cfg: &FilterConfig) -> Result<Vec<FilterState>, FilterError>
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
        let upd = measurement_update(&pred, &meas, cfg).map_err(wrap)?;
        out.push(upd.state);
    }
    Ok(out)
}

/// Normalised estimation error squared `e^T P^-1 e` with `e = est [-] truth`,
/// restricted to components with positive variance. Returns the value and
/// the number of components used.
pub fn nees(estimate: &FilterState, truth: &UeState) -> Result<(f64, usize), FilterError> {
    let e = estimate.mean.boxminus(truth)?.0;
    let live: Vec<usize> = (0..e.len()).filter(|&i| estimate.cov[(i, i)] > 0.0).collect();
    let p = estimate.cov.select_rows(&live).select_columns(&live);
    let e = DVector::from_iterator(live.len(), live.iter().map(|&i| e[i]));
    let inv = spd_inverse(&p).ok_or(FilterError::InnovationNotInvertible)?;
    Ok(((e.transpose() * inv.inverse * &e)[(0, 0)], live.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state(sats: usize) -> UeState {
        UeState {
            position: Vector3::new(1.0, -2.0, 0.5),
            velocity: Vector3::new(10.0, 1.0, 0.0),
            bias: DVector::from_element(sats, 1e-7),
            orientation: RotationMatrix::from_euler_zyx(0.3, 0.1, -0.2),
        }
    }

    #[test]
    fn default_weights_for_twelve_dims() {
        let w = ukf_weights(12, 1e-3, 2.0, 0.0).unwrap();
        let lambda = 1e-6 * 12.0 - 12.0;
        assert_relative_eq!(w.lambda, lambda, max_relative = 1e-12);
        assert_relative_eq!(w.mean[0], lambda / (12.0 + lambda), max_relative = 1e-9);
        assert_relative_eq!(w.cov[0], w.mean[0] + 1.0 - 1e-6 + 2.0, max_relative = 1e-12);
        assert_relative_eq!(w.mean[1], 1.0 / (2.0 * (12.0 + lambda)), max_relative = 1e-9);
        assert_eq!(w.mean.len(), 25);
    }

    #[test]
    fn zero_alpha_is_degenerate() {
        assert!(matches!(ukf_weights(12, 0.0, 2.0, 0.0), Err(FilterError::DegenerateSpread(_))));
    }

    proptest! {
        #[test]
        fn weight_identities(n in 1usize..30, alpha in 1e-4..1.0f64, beta in 0.0..3.0f64, kappa in 0.0..3.0f64) {
            let w = ukf_weights(n, alpha, beta, kappa).unwrap();
            let sm: f64 = w.mean.iter().sum();
            let sc: f64 = w.cov.iter().sum();
            let scale = w.mean[0].abs().max(1.0);
            prop_assert!((sm - 1.0).abs() < 1e-12 * scale);
            prop_assert!((sc - (2.0 - alpha * alpha + beta)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn sigma_set_recovers_covariance() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
        let p = &a * a.transpose() * 0.01 + DMatrix::identity(n, n) * 1e-4;
        let st = FilterState { mean: state(3), cov: p.clone() };
        let w = ukf_weights(n, 1e-3, 2.0, 0.0).unwrap();
        let set = generate_sigma_points(&st, &w).unwrap();
        assert_eq!(set.points.len(), 2 * n + 1);
        let devs: Vec<_> = set.points.iter().map(|x| x.boxminus(&st.mean).unwrap().0).collect();
        let mut cov = DMatrix::zeros(n, n);
        for (d, &wi) in devs.iter().zip(&set.mean_weights) {
            cov += d * d.transpose() * wi;
        }
        // Euclidean blocks exactly, rotation block to first order
        for i in 0..n {
            for j in 0..n {
                let tol = if i >= 9 || j >= 9 { 1e-6 } else { 1e-9 };
                assert!((cov[(i, j)] - p[(i, j)]).abs() < tol * p[(i, i)].max(p[(j, j)]), "{i},{j}");
            }
        }
    }

    #[test]
    fn zero_covariance_gives_identical_points() {
        let st = FilterState { mean: state(2), cov: DMatrix::zeros(11, 11) };
        let w = ukf_weights(11, 1e-3, 2.0, 0.0).unwrap();
        let set = generate_sigma_points(&st, &w).unwrap();
        assert!(set.points.iter().all(|p| *p == st.mean));
    }

    #[test]
    fn process_noise_blocks() {
        let cfg = FilterConfig { dt: 2.0, ..FilterConfig::default() };
        let q = process_noise(2, &cfg);
        let sa2 = 0.04;
        assert_relative_eq!(q[(0, 0)], 4.0 * sa2, max_relative = 1e-12);
        assert_relative_eq!(q[(0, 3)], 4.0 * sa2, max_relative = 1e-12);
        assert_relative_eq!(q[(3, 3)], 4.0 * sa2, max_relative = 1e-12);
        assert_eq!(q[(6, 6)], 0.0);
        assert_relative_eq!(q[(8, 8)], 2f64.to_radians().powi(2), max_relative = 1e-12);
    }

    #[test]
    fn time_update_of_exact_state_adds_process_noise() {
        let st = FilterState { mean: state(1), cov: DMatrix::zeros(10, 10) };
        let imu =
            ImuSample { accel: Vector3::new(0.1, 0.0, 0.0), rotation: RotationMatrix::from_euler_zyx(0.01, 0.0, 0.0) };
        let cfg = FilterConfig::default();
        let pred = time_update(&st, &imu, &cfg).unwrap();
        assert_relative_eq!(pred.state.cov, process_noise(1, &cfg), epsilon = 1e-15);
        assert_relative_eq!(pred.state.mean.position, Vector3::new(11.05, -1.0, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn linear_time_update_matches_closed_form() {
        let n = 10;
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 2) % 7) as f64 / 7.0 - 0.4);
        let p = &a * a.transpose() * 0.01;
        let st = FilterState { mean: state(1), cov: p.clone() };
        let imu = ImuSample { accel: Vector3::zeros(), rotation: RotationMatrix::identity() };
        let cfg = FilterConfig { accel_cov: Matrix3::zeros(), rot_cov: Matrix3::zeros(), ..FilterConfig::default() };
        let pred = time_update(&st, &imu, &cfg).unwrap();
        let mut f = DMatrix::<f64>::identity(n, n);
        for i in 0..3 {
            f[(i, i + 3)] = cfg.dt;
        }
        let want = &f * &p * f.transpose();
        for i in 0..7 {
            for j in 0..7 {
                assert!((pred.state.cov[(i, j)] - want[(i, j)]).abs() < 1e-9, "{i},{j}");
            }
        }
    }

    /// Observes position x with variance `r`.
    struct PositionX {
        r: f64,
        az: Vec<usize>,
    }

    impl ObservationModel for PositionX {
        fn dim(&self) -> usize {
            1
        }
        fn azimuth_indices(&self) -> &[usize] {
            &self.az
        }
        fn predict(&self, user: UserView) -> Result<DVector<f64>, FimError> {
            Ok(DVector::from_element(1, user.position.x))
        }
        fn covariance(&self, _: UserView) -> Result<DMatrix<f64>, FimError> {
            Ok(DMatrix::from_element(1, 1, self.r))
        }
    }

    fn scalar_update(p: f64, r: f64, cross: CrossCovariance) -> UpdateDetails {
        let mut cov = DMatrix::zeros(9, 9);
        cov[(0, 0)] = p;
        let prior = FilterState { mean: state(0), cov };
        let pred = Prediction { deviations: vec![], state: prior.clone() };
        let model = PositionX { r, az: vec![] };
        let obs = DVector::from_element(1, 2.0);
        let cfg = FilterConfig { belief: BeliefMode::Oracle, cross_covariance: cross, ..FilterConfig::default() };
        let sigma = DMatrix::from_element(1, 1, r);
        let pred = if cross == CrossCovariance::PropagatedSet {
            // propagated points equal to the measurement points
            let w = ukf_weights(9, cfg.alpha, cfg.beta, cfg.kappa).unwrap();
            let set = generate_sigma_points(&prior, &w).unwrap();
            Prediction {
                deviations: set.points.iter().map(|x| x.boxminus(&prior.mean).unwrap().0).collect(),
                state: prior,
            }
        } else {
            pred
        };
        let meas = Measurement { observation: &obs, model: &model, epsilon: 0.0, oracle: Some(&sigma) };
        measurement_update(&pred, &meas, &cfg).unwrap()
    }

    #[test]
    fn scalar_gain_matches_kalman() {
        for cross in [CrossCovariance::MeasurementSet, CrossCovariance::PropagatedSet] {
            let (p, r) = (4.0, 1.0);
            let u = scalar_update(p, r, cross);
            assert_relative_eq!(u.gain[(0, 0)], p / (p + r), max_relative = 1e-9);
            assert_relative_eq!(u.state.cov[(0, 0)], p * r / (p + r), max_relative = 1e-9);
            assert_relative_eq!(u.state.mean.position.x, 1.0 + p / (p + r), max_relative = 1e-9);
        }
    }

    #[test]
    fn gain_vanishes_as_belief_grows() {
        let mut last = f64::INFINITY;
        for r in [1.0, 1e2, 1e4, 1e6, 1e8] {
            let g = scalar_update(4.0, r, CrossCovariance::MeasurementSet).gain.norm();
            assert!(g < last);
            last = g;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn empty_timeline_returns_initial() {
        let init = FilterState { mean: state(1), cov: DMatrix::identity(10, 10) };
        let out = track(init.clone(), Vec::new(), &FilterConfig::default()).unwrap();
        assert_eq!(out, vec![init]);
    }

    #[test]
    fn identity_belief_and_oracle() {
        let st = FilterState { mean: state(0), cov: DMatrix::identity(9, 9) };
        let w = ukf_weights(9, 1e-3, 2.0, 0.0).unwrap();
        let set = generate_sigma_points(&st, &w).unwrap();
        let model = PositionX { r: 3.0, az: vec![] };
        let id = belief_assignment(&set, 0.5, BeliefMode::Identity, &model, None).unwrap();
        assert_eq!(id, DMatrix::identity(1, 1));
        let fa = belief_assignment(&set, 0.5, BeliefMode::FimApprox, &model, None).unwrap();
        let wsum: f64 = set.cov_weights.iter().sum();
        assert_relative_eq!(fa[(0, 0)], 0.5 + 3.0 * wsum, max_relative = 1e-9);
        let sigma = DMatrix::from_element(1, 1, 7.0);
        let or = belief_assignment(&set, 0.5, BeliefMode::Oracle, &model, Some(&sigma)).unwrap();
        assert_eq!(or, sigma);
        assert!(matches!(
            belief_assignment(&set, 0.5, BeliefMode::Oracle, &model, None),
            Err(FilterError::MissingOracle)
        ));
    }

    #[test]
    fn nees_of_exact_estimate_is_zero() {
        let st = FilterState { mean: state(1), cov: DMatrix::identity(10, 10) };
        let (v, d) = nees(&st, &st.mean).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d, 10);
    }
}
