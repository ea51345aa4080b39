#![allow(dead_code)]

use leoris::scenario::{build_world, ScenarioConfig, Segment, TrialWorld};

/// Desk trial 0 and the first step at which the RIS serves the user.
pub fn reference() -> (ScenarioConfig, TrialWorld, usize) {
    let cfg = ScenarioConfig::desk();
    let world = build_world(&cfg, 0).expect("desk world");
    let n = world
        .labels
        .segments
        .iter()
        .position(|&s| s == Segment::UrbanVisible)
        .expect("desk course enters the RIS zone");
    (cfg, world, n)
}

pub fn rel_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}
