//! Artifact writers. Column sets are fixed; floats use the shortest
//! round-trip representation so identical runs give identical bytes.

use std::path::Path;

use leoris::manifold::{RotationMatrix, UeState};
use leoris::scenario::metrics::{empirical_cdf, rmse};
use leoris::scenario::{CrbRow, RunVariant, StepRecord, TrialRun, VariantSummary};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub const TRACK_COLUMNS: [&str; 25] = [
    "step",
    "segment",
    "truth_x_m",
    "truth_y_m",
    "truth_z_m",
    "truth_vx_mps",
    "truth_vy_mps",
    "truth_vz_mps",
    "truth_yaw_deg",
    "truth_pitch_deg",
    "truth_roll_deg",
    "est_x_m",
    "est_y_m",
    "est_z_m",
    "est_vx_mps",
    "est_vy_mps",
    "est_vz_mps",
    "est_yaw_deg",
    "est_pitch_deg",
    "est_roll_deg",
    "position_error_m",
    "velocity_error_mps",
    "orientation_error_rad",
    "nees",
    "orthonormality",
];

/// Yaw, pitch and roll in degrees for the z-y-x convention.
fn euler_deg(r: &RotationMatrix) -> [f64; 3] {
    let m = r.matrix();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    [yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees()]
}

fn kinematics(z: &UeState) -> Vec<String> {
    let e = euler_deg(&z.orientation);
    z.position.iter().chain(z.velocity.iter()).chain(e.iter()).map(|&x| num(x)).collect()
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)` and no
/// negative zero.
fn num(x: f64) -> String {
    let x = x + 0.0;
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, OutputError> {
    csv::Writer::from_path(path).map_err(|source| OutputError::Csv { path: path.display().to_string(), source })
}

fn finish<W: std::io::Write>(path: &Path, mut w: csv::Writer<W>) -> Result<(), OutputError> {
    w.flush().map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

pub fn write_track(path: &Path, truth: &[UeState], records: &[StepRecord]) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv_writer(path)?;
    w.write_record(TRACK_COLUMNS).map_err(err)?;
    for r in records {
        let mut row = vec![r.step.to_string(), r.segment.name().to_string()];
        row.extend(kinematics(&truth[r.step]));
        row.extend(kinematics(&r.estimate));
        row.extend([
            num(r.errors.position),
            num(r.errors.velocity),
            num(r.errors.orientation),
            opt(r.nees),
            num(r.orthonormality),
        ]);
        w.write_record(&row).map_err(err)?;
    }
    finish(path, w)
}

pub const METRICS_COLUMNS: [&str; 11] = [
    "trial",
    "step",
    "variant",
    "belief",
    "ris_count",
    "segment",
    "position_error_m",
    "velocity_error_mps",
    "orientation_error_rad",
    "nees",
    "orthonormality",
];

fn variant_fields(v: &RunVariant) -> [String; 3] {
    [v.filter.name().to_string(), v.belief.name().to_string(), v.ris_count.to_string()]
}

/// Per-step rows of every successful run, in trial then variant order.
pub fn write_metrics(path: &Path, runs: &[TrialRun]) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_COLUMNS).map_err(err)?;
    for run in runs {
        let Ok(records) = &run.outcome else { continue };
        for r in records {
            let mut row = vec![run.trial.to_string(), r.step.to_string()];
            row.extend(variant_fields(&run.variant));
            row.extend([
                r.segment.name().to_string(),
                num(r.errors.position),
                num(r.errors.velocity),
                num(r.errors.orientation),
                opt(r.nees),
                num(r.orthonormality),
            ]);
            w.write_record(&row).map_err(err)?;
        }
    }
    finish(path, w)
}

pub const CDF_COLUMNS: [&str; 6] = ["variant", "belief", "ris_count", "quantity", "trial_rmse", "cdf"];

/// Empirical CDF over trials of the per-trial RMSE of each error quantity.
pub fn write_cdf(path: &Path, runs: &[TrialRun], variants: &[RunVariant]) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv_writer(path)?;
    w.write_record(CDF_COLUMNS).map_err(err)?;
    let quantities: [(&str, fn(&StepRecord) -> f64); 3] = [
        ("position", |r| r.errors.position),
        ("velocity", |r| r.errors.velocity),
        ("orientation", |r| r.errors.orientation),
    ];
    for v in variants {
        let ok: Vec<&Vec<StepRecord>> =
            runs.iter().filter(|r| r.variant == *v).filter_map(|r| r.outcome.as_ref().ok()).collect();
        for (name, f) in quantities {
            let per_trial: Vec<f64> = ok.iter().map(|t| rmse(t.iter().map(f))).collect();
            for (x, p) in empirical_cdf(&per_trial) {
                let mut row = variant_fields(v).to_vec();
                row.extend([name.to_string(), num(x), num(p)]);
                w.write_record(&row).map_err(err)?;
            }
        }
    }
    finish(path, w)
}

pub const CRB_COLUMNS: [&str; 5] = ["G", "S", "K", "region", "crb_phi_d"];

pub fn write_crb(path: &Path, rows: &[CrbRow]) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv_writer(path)?;
    w.write_record(CRB_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record([
            r.transmissions.to_string(),
            r.sats.to_string(),
            r.subcarriers.to_string(),
            r.region.name().to_string(),
            num(r.crb_phi_d),
        ])
        .map_err(err)?;
    }
    finish(path, w)
}

#[derive(Serialize)]
pub struct TrackSummary<'a> {
    pub scenario: &'a str,
    pub seed: u64,
    pub trial: usize,
    pub runtime_s: f64,
    #[serde(flatten)]
    pub summary: VariantSummary,
}

/// Monte Carlo aggregates; carries no timing so reruns compare equal.
#[derive(Serialize)]
pub struct MonteCarloSummary<'a> {
    pub scenario: &'a str,
    pub seed: u64,
    pub trials: usize,
    pub variants: Vec<VariantSummary>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let text = serde_json::to_string_pretty(value).expect("summaries serialise");
    std::fs::write(path, text + "\n").map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}
