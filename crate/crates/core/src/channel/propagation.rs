//! Large-scale propagation: path loss components, LOS probability and active
//! RIS amplification.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("reading absorption table: {0}")]
    Csv(#[from] csv::Error),
    #[error("absorption table is not a full frequency x elevation grid")]
    NotAGrid,
    #[error("absorption table is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Rural,
    Suburban,
    Urban,
}

impl Region {
    pub fn name(&self) -> &'static str {
        match self {
            Region::Rural => "rural",
            Region::Suburban => "suburban",
            Region::Urban => "urban",
        }
    }
}

/// Elevations (degrees) at which the LOS probability tables are sampled.
pub const LOS_ELEVATIONS_DEG: [f64; 9] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];
/// LOS probability in percent for rural and suburban areas.
pub const LOS_RURAL_SUBURBAN: [f64; 9] = [78.2, 86.9, 91.9, 92.9, 93.5, 94.0, 94.9, 95.2, 99.8];
/// LOS probability in percent for urban areas.
pub const LOS_URBAN: [f64; 9] = [24.6, 38.6, 49.3, 61.3, 72.6, 80.5, 91.9, 96.8, 99.2];

/// Per-region propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    pub region: Region,
    /// Rician K-factor in dB.
    pub k_factor_db: f64,
    /// Shadow-fading scale: the std in dB is `v_sigma + v_theta log10(theta)`.
    pub v_sigma: f64,
    pub v_theta: f64,
    /// LOS probability in percent at [`LOS_ELEVATIONS_DEG`].
    pub los_percent: Vec<f64>,
    pub clutter_loss_db: f64,
    pub scintillation_db: f64,
}

impl EnvironmentParams {
    pub fn rural() -> Self {
        Self {
            region: Region::Rural,
            k_factor_db: 3.0,
            v_sigma: 1.40,
            v_theta: 1.00,
            los_percent: LOS_RURAL_SUBURBAN.to_vec(),
            clutter_loss_db: 0.0,
            scintillation_db: 0.5,
        }
    }

    pub fn suburban() -> Self {
        Self {
            region: Region::Suburban,
            k_factor_db: 2.6,
            v_sigma: 1.45,
            v_theta: 0.85,
            los_percent: LOS_RURAL_SUBURBAN.to_vec(),
            clutter_loss_db: 0.0,
            scintillation_db: 0.5,
        }
    }

    pub fn urban() -> Self {
        Self {
            region: Region::Urban,
            k_factor_db: 1.85,
            v_sigma: 0.10,
            v_theta: 0.00,
            los_percent: LOS_URBAN.to_vec(),
            clutter_loss_db: 0.0,
            scintillation_db: 0.5,
        }
    }

    pub fn for_region(region: Region) -> Self {
        match region {
            Region::Rural => Self::rural(),
            Region::Suburban => Self::suburban(),
            Region::Urban => Self::urban(),
        }
    }

    /// Linear K-factor.
    pub fn k_factor(&self) -> f64 {
        10f64.powf(self.k_factor_db / 10.0)
    }

    /// Shadow-fading loss in dB for a standard normal draw `x` at elevation
    /// `theta` (radians, floored at 1 mrad).
    pub fn shadow_fading_db(&self, theta: f64, x: f64) -> f64 {
        x * (self.v_sigma + self.v_theta * theta.max(1e-3).log10())
    }
}

/// LOS probability (0..1) at elevation `theta` radians, linearly interpolated
/// in degrees and clamped at the table ends.
pub fn los_probability(theta: f64, env: &EnvironmentParams) -> f64 {
    interp_clamped(&LOS_ELEVATIONS_DEG, &env.los_percent, theta.to_degrees()) / 100.0
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Free-space path loss in dB for distance `d` metres at `f_ghz` GHz.
pub fn fspl_db(d: f64, f_ghz: f64) -> f64 {
    32.45 + 20.0 * d.log10() + 20.0 * f_ghz.log10()
}

/// Atmospheric absorption lookup on a frequency x elevation grid, bilinear
/// between samples and clamped outside.
#[derive(Debug, Clone, PartialEq)]
pub struct AtmosphereTable {
    freqs_ghz: Vec<f64>,
    elevations_deg: Vec<f64>,
    /// Row-major over (frequency, elevation).
    loss_db: Vec<f64>,
}

const DEFAULT_ATMOSPHERE: &str = include_str!("atmospheric_absorption.csv");

#[derive(Deserialize)]
struct AtmosphereRow {
    frequency_ghz: f64,
    elevation_deg: f64,
    loss_db: f64,
}

impl AtmosphereTable {
    /// Table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_reader(DEFAULT_ATMOSPHERE.as_bytes()).expect("built-in absorption table is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::from_reader(std::fs::File::open(path).map_err(csv::Error::from)?)
    }

    /// Reads `frequency_GHz,elevation_deg,loss_dB` rows (header names are
    /// case-insensitive).
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect::<Vec<_>>();
        rdr.set_headers(csv::StringRecord::from(headers));
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<AtmosphereRow>() {
            rows.push(rec?);
        }
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        let mut freqs: Vec<f64> = rows.iter().map(|r| r.frequency_ghz).collect();
        let mut els: Vec<f64> = rows.iter().map(|r| r.elevation_deg).collect();
        for v in [&mut freqs, &mut els] {
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
        }
        if freqs.len() * els.len() != rows.len() {
            return Err(TableError::NotAGrid);
        }
        let mut loss = vec![f64::NAN; rows.len()];
        for r in &rows {
            let i = freqs.iter().position(|&f| f == r.frequency_ghz).unwrap();
            let j = els.iter().position(|&e| e == r.elevation_deg).unwrap();
            loss[i * els.len() + j] = r.loss_db;
        }
        if loss.iter().any(|x| x.is_nan()) {
            return Err(TableError::NotAGrid);
        }
        Ok(Self { freqs_ghz: freqs, elevations_deg: els, loss_db: loss })
    }

    /// Absorption in dB at `f_ghz` and elevation `theta` radians.
    pub fn loss_db(&self, f_ghz: f64, theta: f64) -> f64 {
        let row = |i: usize| {
            let n = self.elevations_deg.len();
            interp_clamped(&self.elevations_deg, &self.loss_db[i * n..(i + 1) * n], theta.to_degrees())
        };
        if self.freqs_ghz.len() == 1 {
            return row(0);
        }
        let col: Vec<f64> = (0..self.freqs_ghz.len()).map(row).collect();
        interp_clamped(&self.freqs_ghz, &col, f_ghz)
    }
}

impl Default for AtmosphereTable {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Total satellite-link loss in dB: free space, shadow fading for draw `x`,
/// clutter, atmospheric absorption and scintillation.
pub fn total_path_loss(
    d: f64,
    f_ghz: f64,
    theta: f64,
    env: &EnvironmentParams,
    atmosphere: &AtmosphereTable,
    x: f64,
) -> f64 {
    fspl_db(d, f_ghz)
        + env.shadow_fading_db(theta, x)
        + env.clutter_loss_db
        + atmosphere.loss_db(f_ghz, theta)
        + env.scintillation_db
}

/// Loss of the terrestrial RIS-user link: free space plus shadow fading.
pub fn ris_link_loss(d: f64, f_ghz: f64, theta: f64, env: &EnvironmentParams, x: f64) -> f64 {
    fspl_db(d, f_ghz) + env.shadow_fading_db(theta, x)
}

/// Mean LOS amplitude `P_los * 10^(-PL/20)`.
pub fn expected_gain_amplitude(loss_db: f64, p_los: f64) -> f64 {
    p_los * 10f64.powf(-loss_db / 20.0)
}

/// Amplitude gain of an active RIS, `sqrt(1 + P_R / incident)`, capped at
/// `max_gain_db` (power dB).
pub fn ris_amplification(ris_power: f64, incident_power: f64, max_gain_db: f64) -> f64 {
    let cap = 10f64.powf(max_gain_db / 20.0);
    if incident_power <= 0.0 {
        return cap;
    }
    (1.0 + ris_power / incident_power).sqrt().min(cap)
}
