//! Everything random about one Monte Carlo trial, and filter runs over it.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::metrics::{step_errors, StepErrors};
use super::orbit::propagate_satellites;
use super::synth::{draw_observation, synthesize_imu, SnapshotModel};
use super::trajectory::{generate_trajectory, region_at, Segment, TruthTrajectory};
use super::ScenarioError;
use crate::channel::{ChannelSnapshot, EnvironmentParams, Region, Shadowing, SnapshotSpec};
use crate::filter::euclidean::{self, EuclideanState};
use crate::filter::{nees, track, BeliefMode, FilterError, FilterState, ImuSample, ObservationModel, StepInput};
use crate::geometry::{AsinPolicy, RisState};
use crate::manifold::{orthonormality_error, skew, TangentVector, UeState};

/// Random streams of a trial.
pub mod purpose {
    pub const CLOCK: u64 = 1;
    pub const IMU: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const INITIAL: u64 = 4;
    pub const CRB: u64 = 5;
    /// Observation noise; the RIS count is added so configurations with
    /// different observation vectors draw from separate streams.
    pub const OBSERVATION: u64 = 0x100;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `purpose` in trial `trial`:
/// `mix(mix(mix(root) ^ trial) ^ purpose)` with the SplitMix64 finaliser.
/// Any trial can be regenerated on its own.
pub fn derive_seed(root: u64, trial: u64, purpose: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ trial) ^ purpose)
}

pub fn stream(root: u64, trial: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, trial, purpose))
}

/// Clock biases in seconds, uniform over the configured range.
pub fn draw_clock_biases(cfg: &ScenarioConfig, trial: usize) -> DVector<f64> {
    let mut rng = stream(cfg.seed, trial as u64, purpose::CLOCK);
    let [lo, hi] = cfg.clock_bias_ns;
    DVector::from_fn(cfg.satellites.len(), |_, _| if hi > lo { rng.gen_range(lo..hi) } else { lo } * 1e-9)
}

/// Truth trajectory with region and RIS-zone labels per state.
#[derive(Debug, Clone)]
pub struct LabelledTruth {
    pub truth: TruthTrajectory,
    pub regions: Vec<Region>,
    /// Per state, per configured RIS.
    pub ris_visible: Vec<Vec<bool>>,
    pub segments: Vec<Segment>,
}

pub fn labelled_truth(cfg: &ScenarioConfig, bias: &DVector<f64>) -> LabelledTruth {
    let truth = generate_trajectory(&cfg.trajectory, bias, cfg.steps, cfg.dt);
    let regions: Vec<Region> = truth.distance.iter().map(|&s| region_at(&cfg.regions, s)).collect();
    let ris_visible: Vec<Vec<bool>> =
        truth.states.iter().map(|z| cfg.riss.iter().map(|r| r.serves(&z.position)).collect()).collect();
    let segments =
        regions.iter().zip(&ris_visible).map(|(&reg, vis)| Segment::new(reg, vis.iter().any(|&v| v))).collect();
    LabelledTruth { truth, regions, ris_visible, segments }
}

/// Channel snapshot for the user at state `n`, with all configured RISs.
pub fn draw_snapshot<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    labels: &LabelledTruth,
    n: usize,
    frame: &crate::channel::FrameConfig,
    region: Region,
    shadowing: Shadowing,
    atmosphere: &crate::channel::AtmosphereTable,
    rng: &mut R,
) -> Result<ChannelSnapshot, ScenarioError> {
    let sats = propagate_satellites(&cfg.satellites, n as f64 * cfg.dt);
    let riss: Vec<RisState> = cfg.riss.iter().map(|r| r.state()).collect();
    let env = EnvironmentParams::for_region(region);
    let ris_env = EnvironmentParams::for_region(cfg.ris_region);
    Ok(ChannelSnapshot::draw(
        SnapshotSpec {
            frame,
            arrays: &cfg.arrays,
            satellites: &sats,
            riss: &riss,
            ris_visible: &labels.ris_visible[n],
            environment: &env,
            ris_environment: &ris_env,
            atmosphere,
            shadowing,
        },
        rng,
    )?)
}

/// Initial estimate: the true start with zero covariance, or a draw around
/// it with the configured spread.
pub fn initial_estimate(cfg: &ScenarioConfig, start: &UeState, trial: usize) -> Result<FilterState, ScenarioError> {
    let s = start.num_sats();
    let n = s + 9;
    let init = &cfg.initial;
    if init.is_exact() {
        return Ok(FilterState { mean: start.clone(), cov: DMatrix::zeros(n, n) });
    }
    let mut std = vec![init.position_m; 3];
    std.extend([init.velocity_mps; 3]);
    std.extend(std::iter::repeat(init.bias_ns * 1e-9).take(s));
    std.extend([init.rotation_deg.to_radians(); 3]);
    let mut rng = stream(cfg.seed, trial as u64, purpose::INITIAL);
    let dev = DVector::from_fn(n, |i, _| std[i] * rng.sample::<f64, _>(StandardNormal));
    let cov = DMatrix::from_diagonal(&DVector::from_iterator(n, std.iter().map(|x| x * x)));
    Ok(FilterState { mean: start.boxplus(&TangentVector(dev))?, cov })
}

/// Covariance of the embedded state `[p, v, b, vec(R)]` to first order.
pub fn euclidean_initial(state: &FilterState) -> EuclideanState {
    let s = state.mean.num_sats();
    let n = s + 9;
    let r = state.mean.orientation.matrix();
    // d vec(R) = vec(R [dw]x), one column per tangent axis
    let mut jac = DMatrix::zeros(s + 15, n);
    for i in 0..6 + s {
        jac[(i, i)] = 1.0;
    }
    for k in 0..3 {
        let d = r * skew(&Vector3::ith(k, 1.0));
        for (j, v) in d.as_slice().iter().enumerate() {
            jac[(6 + s + j, 6 + s + k)] = *v;
        }
    }
    let mut out = EuclideanState::from_state(&state.mean);
    out.cov = &jac * &state.cov * jac.transpose();
    out
}

/// Shared randomness of one trial.
#[derive(Debug, Clone)]
pub struct TrialWorld {
    pub trial: usize,
    pub labels: LabelledTruth,
    pub imu: Vec<ImuSample>,
    /// Snapshot of step `n` at index `n - 1`.
    pub snapshots: Vec<ChannelSnapshot>,
    pub initial: FilterState,
}

impl TrialWorld {
    pub fn truth(&self) -> &TruthTrajectory {
        &self.labels.truth
    }
}

pub fn build_world(cfg: &ScenarioConfig, trial: usize) -> Result<TrialWorld, ScenarioError> {
    let bias = draw_clock_biases(cfg, trial);
    let labels = labelled_truth(cfg, &bias);
    let fc = cfg.filter_config(BeliefMode::Identity);
    let imu =
        synthesize_imu(&labels.truth, &fc.accel_cov, &fc.rot_cov, &mut stream(cfg.seed, trial as u64, purpose::IMU));
    let atmosphere = cfg.atmosphere()?;
    let mut rng = stream(cfg.seed, trial as u64, purpose::CHANNEL);
    let snapshots = (1..=cfg.steps)
        .map(|n| {
            draw_snapshot(cfg, &labels, n, &cfg.frame, labels.regions[n], Shadowing::Random, &atmosphere, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let initial = initial_estimate(cfg, &labels.truth.states[0], trial)?;
    Ok(TrialWorld { trial, labels, imu, snapshots, initial })
}

/// Observations of a trial for a given number of RISs.
#[derive(Debug, Clone)]
pub struct Observed {
    pub ris_count: usize,
    pub snapshots: Vec<ChannelSnapshot>,
    pub observations: Vec<DVector<f64>>,
    /// Covariance each observation was drawn with.
    pub sigmas: Vec<DMatrix<f64>>,
}

pub fn observe(cfg: &ScenarioConfig, world: &TrialWorld, ris_count: usize) -> Result<Observed, ScenarioError> {
    if ris_count > cfg.riss.len() {
        return Err(ScenarioError::Config(format!("{ris_count} RISs requested, {} configured", cfg.riss.len())));
    }
    let snapshots: Vec<ChannelSnapshot> = world.snapshots.iter().map(|s| s.with_riss(ris_count)).collect();
    let mut rng = stream(cfg.seed, world.trial as u64, purpose::OBSERVATION + ris_count as u64);
    let mut observations = Vec::with_capacity(snapshots.len());
    let mut sigmas = Vec::with_capacity(snapshots.len());
    for (i, snap) in snapshots.iter().enumerate() {
        let model = SnapshotModel::new(snap, AsinPolicy::Strict);
        let truth = (&world.truth().states[i + 1]).into();
        let sigma = model.covariance(truth)?;
        observations.push(draw_observation(&model, truth, &sigma, &mut rng)?);
        sigmas.push(sigma);
    }
    Ok(Observed { ris_count, snapshots, observations, sigmas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVariant {
    Riemannian,
    Euclidean,
}

impl FilterVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FilterVariant::Riemannian => "riemannian",
            FilterVariant::Euclidean => "euclidean",
        }
    }
}

/// One filter configuration of a Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunVariant {
    pub filter: FilterVariant,
    pub belief: BeliefMode,
    pub ris_count: usize,
}

impl RunVariant {
    pub fn label(&self) -> String {
        format!("{}/{}/ris{}", self.filter.name(), self.belief.name(), self.ris_count)
    }
}

/// Outcome of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub segment: Segment,
    /// Estimate used for the errors; the Euclidean rotation block is
    /// projected onto the rotation group.
    pub estimate: UeState,
    pub errors: StepErrors,
    pub nees: Option<f64>,
    /// `|R^T R - I|_F` of the filter's own orientation estimate.
    pub orthonormality: f64,
}

/// Runs one variant over prepared observations.
pub fn run_variant(
    cfg: &ScenarioConfig,
    world: &TrialWorld,
    observed: &Observed,
    variant: RunVariant,
) -> Result<Vec<StepRecord>, FilterError> {
    let fc = cfg.filter_config(variant.belief);
    let policy = match variant.filter {
        FilterVariant::Riemannian => AsinPolicy::Strict,
        FilterVariant::Euclidean => AsinPolicy::Lenient,
    };
    let models: Vec<SnapshotModel> = observed.snapshots.iter().map(|s| SnapshotModel::new(s, policy)).collect();
    let labels = &world.labels;
    let timeline = (0..cfg.steps).map(|i| StepInput {
        imu: world.imu[i],
        observation: observed.observations[i].clone(),
        model: &models[i] as &dyn ObservationModel,
        epsilon: cfg.filter.epsilon.for_segment(labels.segments[i + 1]),
        oracle: (variant.belief == BeliefMode::Oracle).then(|| observed.sigmas[i].clone()),
    });
    let truth = &labels.truth.states;
    let record = |n: usize, estimate: UeState, nees: Option<f64>, orthonormality: f64| StepRecord {
        step: n,
        segment: labels.segments[n],
        errors: step_errors(&truth[n], &estimate),
        estimate,
        nees,
        orthonormality,
    };
    match variant.filter {
        FilterVariant::Riemannian => {
            let states = track(world.initial.clone(), timeline, &fc)?;
            Ok(states
                .into_iter()
                .enumerate()
                .skip(1)
                .map(|(n, st)| {
                    let v = nees(&st, &truth[n]).ok().map(|(v, _)| v);
                    let o = orthonormality_error(st.mean.orientation.matrix());
                    record(n, st.mean, v, o)
                })
                .collect())
        }
        FilterVariant::Euclidean => {
            let states = euclidean::track(euclidean_initial(&world.initial), timeline, &fc)?;
            Ok(states
                .into_iter()
                .enumerate()
                .skip(1)
                .map(|(n, st)| {
                    let o = orthonormality_error(&euclidean::unpack(&st.x).rotation);
                    record(n, st.projected(), None, o)
                })
                .collect())
        }
    }
}
