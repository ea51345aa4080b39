//! Parallel Monte Carlo over trials and aggregation of the results.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

use super::config::ScenarioConfig;
use super::metrics::rmse;
use super::trajectory::Segment;
use super::world::{build_world, observe, run_variant, RunVariant, StepRecord};

/// One (trial, variant) run.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trial: usize,
    pub variant: RunVariant,
    pub outcome: Result<Vec<StepRecord>, String>,
}

/// Runs every variant on one trial with shared truth, IMU and channels.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize, variants: &[RunVariant]) -> Vec<TrialRun> {
    let fail = |msg: String| -> Vec<TrialRun> {
        variants.iter().map(|&v| TrialRun { trial, variant: v, outcome: Err(msg.clone()) }).collect()
    };
    let world = match build_world(cfg, trial) {
        Ok(w) => w,
        Err(e) => return fail(e.to_string()),
    };
    let counts: BTreeSet<usize> = variants.iter().map(|v| v.ris_count).collect();
    let mut observed = BTreeMap::new();
    for c in counts {
        observed.insert(c, observe(cfg, &world, c).map_err(|e| e.to_string()));
    }
    variants
        .iter()
        .map(|&v| {
            let outcome = match &observed[&v.ris_count] {
                Ok(obs) => run_variant(cfg, &world, obs, v).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            TrialRun { trial, variant: v, outcome }
        })
        .collect()
}

/// Runs trials `0..trials` in parallel on the current rayon pool. Results
/// are ordered by trial, then by the order of `variants`.
pub fn run_monte_carlo(cfg: &ScenarioConfig, trials: usize, variants: &[RunVariant]) -> Vec<TrialRun> {
    (0..trials).into_par_iter().flat_map_iter(|t| run_trial(cfg, t, variants)).collect()
}

/// Error statistics over a set of steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorStats {
    pub samples: usize,
    /// RMSE pooled over all steps of all trials.
    pub position_rmse: Option<f64>,
    pub velocity_rmse: Option<f64>,
    pub orientation_rmse: Option<f64>,
    /// Per-trial RMSE averaged over trials.
    pub mean_trial_position_rmse: Option<f64>,
    pub mean_trial_velocity_rmse: Option<f64>,
    pub mean_trial_orientation_rmse: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        finite(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn error_stats(per_trial: &[Vec<&StepRecord>]) -> ErrorStats {
    let all: Vec<&StepRecord> = per_trial.iter().flatten().copied().collect();
    let pooled = |f: fn(&StepRecord) -> f64| finite(rmse(all.iter().map(|r| f(r))));
    let by_trial = |f: fn(&StepRecord) -> f64| {
        let v: Vec<f64> = per_trial.iter().filter(|t| !t.is_empty()).map(|t| rmse(t.iter().map(|r| f(r)))).collect();
        mean(&v)
    };
    ErrorStats {
        samples: all.len(),
        position_rmse: pooled(|r| r.errors.position),
        velocity_rmse: pooled(|r| r.errors.velocity),
        orientation_rmse: pooled(|r| r.errors.orientation),
        mean_trial_position_rmse: by_trial(|r| r.errors.position),
        mean_trial_velocity_rmse: by_trial(|r| r.errors.velocity),
        mean_trial_orientation_rmse: by_trial(|r| r.errors.orientation),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

/// Aggregates of one variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    #[serde(flatten)]
    pub config: RunVariant,
    pub trials_ok: usize,
    pub failures: Vec<TrialFailure>,
    pub overall: ErrorStats,
    pub segments: BTreeMap<String, ErrorStats>,
    /// NEES averaged over trials and steps (manifold filter only).
    pub mean_nees: Option<f64>,
    pub max_orthonormality_error: Option<f64>,
}

pub fn summarize(runs: &[TrialRun], variants: &[RunVariant]) -> Vec<VariantSummary> {
    variants
        .iter()
        .map(|&v| {
            let mine: Vec<&TrialRun> = runs.iter().filter(|r| r.variant == v).collect();
            let ok: Vec<&Vec<StepRecord>> = mine.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let failures = mine
                .iter()
                .filter_map(|r| r.outcome.as_ref().err().map(|e| TrialFailure { trial: r.trial, error: e.clone() }))
                .collect();
            let overall = error_stats(&ok.iter().map(|t| t.iter().collect()).collect::<Vec<_>>());
            let segments = Segment::ALL
                .iter()
                .map(|&seg| {
                    let per: Vec<Vec<&StepRecord>> =
                        ok.iter().map(|t| t.iter().filter(|r| r.segment == seg).collect()).collect();
                    (seg.name().to_string(), error_stats(&per))
                })
                .collect();
            let nees: Vec<f64> = ok.iter().flat_map(|t| t.iter().filter_map(|r| r.nees)).collect();
            let ortho = ok
                .iter()
                .flat_map(|t| t.iter().map(|r| r.orthonormality))
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
            VariantSummary {
                variant: v.label(),
                config: v,
                trials_ok: ok.len(),
                failures,
                overall,
                segments,
                mean_nees: mean(&nees),
                max_orthonormality_error: ortho,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::BeliefMode;
    use crate::manifold::UeState;
    use crate::scenario::metrics::StepErrors;
    use crate::scenario::world::FilterVariant;

    fn rec(seg: Segment, e: f64) -> StepRecord {
        StepRecord {
            step: 1,
            segment: seg,
            estimate: UeState {
                position: Default::default(),
                velocity: Default::default(),
                bias: nalgebra::DVector::zeros(0),
                orientation: crate::manifold::RotationMatrix::identity(),
            },
            errors: StepErrors { position: e, velocity: e, orientation: e },
            nees: Some(e),
            orthonormality: 0.0,
        }
    }

    #[test]
    fn summary_separates_segments_and_failures() {
        let v = RunVariant { filter: FilterVariant::Riemannian, belief: BeliefMode::Oracle, ris_count: 1 };
        let runs = vec![
            TrialRun {
                trial: 0,
                variant: v,
                outcome: Ok(vec![rec(Segment::Rural, 2.0), rec(Segment::UrbanVisible, 1.0)]),
            },
            TrialRun { trial: 1, variant: v, outcome: Err("boom".into()) },
            TrialRun { trial: 2, variant: v, outcome: Ok(vec![rec(Segment::Rural, 2.0)]) },
        ];
        let s = &summarize(&runs, &[v])[0];
        assert_eq!(s.trials_ok, 2);
        assert_eq!(s.failures, vec![TrialFailure { trial: 1, error: "boom".into() }]);
        assert_eq!(s.segments["rural"].position_rmse, Some(2.0));
        assert_eq!(s.segments["urban_visible"].samples, 1);
        assert_eq!(s.segments["suburban"].position_rmse, None);
        assert_eq!(s.mean_nees, Some(5.0 / 3.0));
    }
}
