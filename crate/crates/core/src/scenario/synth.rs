//! IMU and channel-parameter measurement synthesis.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::trajectory::TruthTrajectory;
use crate::channel::ChannelSnapshot;
use crate::filter::{ImuSample, ObservationModel};
use crate::fim::{FimError, FimEvaluator};
use crate::geometry::{assemble_observation, AsinPolicy, ObsLayout, RisState, UserView};
use crate::linalg::{psd_lower_factor, wrap_angle};
use crate::manifold::RotationMatrix;

fn lower3(c: &Matrix3<f64>) -> Matrix3<f64> {
    let l = psd_lower_factor(&DMatrix::from_column_slice(3, 3, c.as_slice()));
    Matrix3::from_column_slice(l.as_slice())
}

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

/// `a = a_true + N(0, C_a)` and `Omega = Omega_true (I [+] N(0, C_omega))`
/// for every interval of `truth`.
pub fn synthesize_imu<R: Rng + ?Sized>(
    truth: &TruthTrajectory,
    accel_cov: &Matrix3<f64>,
    rot_cov: &Matrix3<f64>,
    rng: &mut R,
) -> Vec<ImuSample> {
    let la = lower3(accel_cov);
    let lw = lower3(rot_cov);
    (0..truth.steps())
        .map(|n| {
            let da = la * normal3(rng);
            let dw = lw * normal3(rng);
            ImuSample {
                accel: truth.accel[n] + da,
                rotation: truth.rotation[n].compose(&RotationMatrix::identity().boxplus(&dw)),
            }
        })
        .collect()
}

/// The observation function and its FIM-based covariance for one frame.
pub struct SnapshotModel<'a> {
    snapshot: &'a ChannelSnapshot,
    riss: Vec<RisState>,
    azimuth: Vec<usize>,
    evaluator: FimEvaluator<'a>,
}

impl<'a> SnapshotModel<'a> {
    pub fn new(snapshot: &'a ChannelSnapshot, policy: AsinPolicy) -> Self {
        let layout = ObsLayout::new(snapshot.num_sats(), snapshot.num_riss());
        let mut evaluator = FimEvaluator::new(snapshot);
        evaluator.policy = policy;
        Self {
            snapshot,
            riss: snapshot.riss.iter().map(|r| r.state.clone()).collect(),
            azimuth: layout.azimuth_indices(),
            evaluator,
        }
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(self.snapshot.num_sats(), self.snapshot.num_riss())
    }
}

impl ObservationModel for SnapshotModel<'_> {
    fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn azimuth_indices(&self) -> &[usize] {
        &self.azimuth
    }

    fn predict(&self, user: UserView) -> Result<DVector<f64>, FimError> {
        Ok(assemble_observation(
            user,
            &self.snapshot.satellites,
            &self.riss,
            self.snapshot.wavelength(),
            self.evaluator.policy,
        )?)
    }

    fn covariance(&self, user: UserView) -> Result<DMatrix<f64>, FimError> {
        Ok(self.evaluator.evaluate(user)?.covariance.sigma)
    }
}

/// A synthesized observation and the covariance it was drawn with.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub observation: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// `h(zeta) + L w` with `L L^T = Sigma(zeta)` and `w` standard normal;
/// azimuth entries are wrapped into (-pi, pi].
pub fn synthesize_observation<R: Rng + ?Sized>(
    model: &dyn ObservationModel,
    truth: UserView,
    rng: &mut R,
) -> Result<Synthesized, FimError> {
    let sigma = model.covariance(truth)?;
    Ok(Synthesized { observation: draw_observation(model, truth, &sigma, rng)?, sigma })
}

/// Draw with a given covariance.
pub fn draw_observation<R: Rng + ?Sized>(
    model: &dyn ObservationModel,
    truth: UserView,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, FimError> {
    let h = model.predict(truth)?;
    let l = psd_lower_factor(sigma);
    let w = DVector::from_fn(h.len(), |_, _| rng.sample(StandardNormal));
    let mut obs = h + l * w;
    for &i in model.azimuth_indices() {
        obs[i] = wrap_angle(obs[i]);
    }
    Ok(obs)
}
