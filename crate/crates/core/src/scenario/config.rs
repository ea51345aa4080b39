//! Scenario description loaded from JSON.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::orbit::OrbitElements;
use super::trajectory::{MotionSegment, RegionInterval, RisConfig, Segment, TrajectoryConfig};
use super::ScenarioError;
use crate::channel::{ArraySet, AtmosphereTable, FrameConfig, Region};
use crate::filter::{BeliefMode, CrossCovariance, FilterConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuNoise {
    /// Accelerometer standard deviation per axis (m/s^2).
    pub accel_std: f64,
    /// Rotation-increment standard deviation per axis (degrees).
    pub rotation_std_deg: f64,
}

/// Belief regularisation per reporting segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub rural: f64,
    pub suburban: f64,
    pub urban_invisible: f64,
    pub urban_visible: f64,
}

impl EpsilonSchedule {
    pub fn for_segment(&self, seg: Segment) -> f64 {
        match seg {
            Segment::Rural => self.rural,
            Segment::Suburban => self.suburban,
            Segment::UrbanInvisible => self.urban_invisible,
            Segment::UrbanVisible => self.urban_visible,
        }
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { rural: 0.5, suburban: 0.5, urban_invisible: 0.5, urban_visible: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub wrap_azimuth: bool,
    pub cross_covariance: CrossCovariance,
    pub epsilon: EpsilonSchedule,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            wrap_azimuth: true,
            cross_covariance: CrossCovariance::MeasurementSet,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

/// Standard deviations of the initial estimate around the true start. All
/// zero means the filter starts exactly at the truth with zero covariance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialUncertainty {
    pub position_m: f64,
    pub velocity_mps: f64,
    pub bias_ns: f64,
    pub rotation_deg: f64,
}

impl InitialUncertainty {
    pub fn is_exact(&self) -> bool {
        self.position_m == 0.0 && self.velocity_mps == 0.0 && self.bias_ns == 0.0 && self.rotation_deg == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Root seed of all random streams.
    pub seed: u64,
    pub steps: usize,
    pub trials: usize,
    /// Update interval in seconds.
    pub dt: f64,
    pub frame: FrameConfig,
    pub arrays: ArraySet,
    pub satellites: Vec<OrbitElements>,
    pub riss: Vec<RisConfig>,
    /// Environment around the surfaces, used for the satellite-RIS legs.
    pub ris_region: Region,
    pub trajectory: TrajectoryConfig,
    pub regions: Vec<RegionInterval>,
    pub imu: ImuNoise,
    pub filter: FilterSettings,
    /// Range of the per-satellite clock biases in nanoseconds.
    pub clock_bias_ns: [f64; 2],
    pub initial: InitialUncertainty,
    /// Optional absorption table replacing the built-in one.
    pub atmosphere_csv: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn regions_900m() -> Vec<RegionInterval> {
    vec![
        RegionInterval { region: Region::Rural, until_m: 300.0 },
        RegionInterval { region: Region::Suburban, until_m: 600.0 },
        RegionInterval { region: Region::Urban, until_m: f64::MAX },
    ]
}

fn orbit(inclination_deg: f64, raan_deg: f64, phase_deg: f64) -> OrbitElements {
    OrbitElements { height_m: 500e3, inclination_deg, raan_deg, phase_deg }
}

fn first_ris() -> RisConfig {
    RisConfig {
        position: [790.0, 25.0, 10.0],
        normal: [0.0, -1.0, 0.0],
        zone: vec![[700.0, -100.0], [900.0, -100.0], [900.0, 25.0], [700.0, 25.0]],
    }
}

fn second_ris() -> RisConfig {
    RisConfig {
        position: [860.0, -25.0, 10.0],
        normal: [0.0, 1.0, 0.0],
        zone: vec![[800.0, -25.0], [950.0, -25.0], [950.0, 100.0], [800.0, 100.0]],
    }
}

impl ScenarioConfig {
    /// Small profile: 3 satellites, 1 RIS, 128 subcarriers, 8 transmissions,
    /// 60 one-second steps over 900 m.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            seed: 20240611,
            steps: 60,
            trials: 20,
            dt: 1.0,
            frame: FrameConfig { subcarriers: 128, transmissions: 8, ..FrameConfig::default() },
            arrays: ArraySet::default(),
            satellites: vec![orbit(87.0, 0.0, 88.5), orbit(93.0, 120.0, 89.0), orbit(92.5, 240.0, 88.0)],
            riss: vec![first_ris()],
            ris_region: Region::Urban,
            trajectory: TrajectoryConfig {
                start: [0.0, 0.0, 1.5],
                velocity: [15.0, 0.0, 0.0],
                attitude_deg: [0.0, 0.0, 0.0],
                segments: vec![
                    MotionSegment { duration_s: 15.0, accel: [0.1, 0.0, 0.0], yaw_rate: 0.01 },
                    MotionSegment { duration_s: 15.0, accel: [-0.1, 0.0, 0.0], yaw_rate: -0.015 },
                    MotionSegment { duration_s: 15.0, accel: [0.05, 0.0, 0.0], yaw_rate: 0.02 },
                    MotionSegment { duration_s: 15.0, accel: [-0.05, 0.0, 0.0], yaw_rate: -0.01 },
                ],
            },
            regions: regions_900m(),
            imu: ImuNoise { accel_std: 0.2, rotation_std_deg: 2.0 },
            filter: FilterSettings::default(),
            clock_bias_ns: [80.0, 120.0],
            initial: InitialUncertainty::default(),
            atmosphere_csv: None,
        }
    }

    /// Full profile: 5 satellites, 2 RISs, 3000 subcarriers, 32 transmissions,
    /// 180 one-second steps over the same 900 m course.
    pub fn paper_scale() -> Self {
        let mut c = Self::desk();
        c.name = "paper-scale".into();
        c.steps = 180;
        c.frame.subcarriers = 3000;
        c.frame.transmissions = 32;
        c.satellites = vec![
            orbit(87.0, 0.0, 85.0),
            orbit(93.0, 120.0, 85.5),
            orbit(92.5, 240.0, 84.5),
            orbit(87.5, 60.0, 84.0),
            orbit(93.5, 300.0, 85.0),
        ];
        c.riss = vec![first_ris(), second_ris()];
        c.trajectory.velocity = [5.0, 0.0, 0.0];
        c.trajectory.segments = vec![
            MotionSegment { duration_s: 45.0, accel: [0.02, 0.0, 0.0], yaw_rate: 0.004 },
            MotionSegment { duration_s: 45.0, accel: [-0.02, 0.0, 0.0], yaw_rate: -0.005 },
            MotionSegment { duration_s: 45.0, accel: [0.01, 0.0, 0.0], yaw_rate: 0.006 },
            MotionSegment { duration_s: 45.0, accel: [-0.01, 0.0, 0.0], yaw_rate: -0.004 },
        ];
        c
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.satellites.is_empty() {
            return bad("at least one satellite is required");
        }
        if self.regions.is_empty() {
            return bad("at least one region interval is required");
        }
        if self.frame.subcarriers == 0 || self.frame.transmissions == 0 {
            return bad("frame needs at least one subcarrier and one transmission");
        }
        if self.imu.accel_std < 0.0 || self.imu.rotation_std_deg < 0.0 {
            return bad("IMU standard deviations must be nonnegative");
        }
        if self.clock_bias_ns[0] > self.clock_bias_ns[1] {
            return bad("clock_bias_ns must be [low, high]");
        }
        if self.riss.iter().any(|r| r.normal.iter().all(|&x| x == 0.0)) {
            return bad("RIS normal must be nonzero");
        }
        Ok(())
    }

    pub fn atmosphere(&self) -> Result<AtmosphereTable, ScenarioError> {
        match &self.atmosphere_csv {
            None => Ok(AtmosphereTable::builtin()),
            Some(p) => {
                AtmosphereTable::from_path(p).map_err(|e| ScenarioError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Filter settings for a belief mode.
    pub fn filter_config(&self, belief: BeliefMode) -> FilterConfig {
        let sa = self.imu.accel_std;
        let sw = self.imu.rotation_std_deg.to_radians();
        FilterConfig {
            alpha: self.filter.alpha,
            beta: self.filter.beta,
            kappa: self.filter.kappa,
            accel_cov: Matrix3::identity() * (sa * sa),
            rot_cov: Matrix3::identity() * (sw * sw),
            dt: self.dt,
            belief,
            wrap_azimuth: self.filter.wrap_azimuth,
            cross_covariance: self.filter.cross_covariance,
        }
    }
}
