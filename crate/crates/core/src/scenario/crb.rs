//! Bound on the RIS departure angles versus frame overhead.
//!
//! One frame with the largest grid sizes is drawn per subcarrier count and
//! environment at a reference state where the RISs serve the user; smaller
//! satellite and transmission counts are prefixes of it, so every grid axis
//! compares nested information. Shadowing is fixed at its median.

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::world::{draw_clock_biases, draw_snapshot, labelled_truth, purpose, stream};
use super::ScenarioError;
use crate::channel::{Region, Shadowing};
use crate::fim::{crb_phi_d, FimEvaluator};
use crate::geometry::ObsLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbGrid {
    pub transmissions: Vec<usize>,
    pub sats: Vec<usize>,
    pub subcarriers: Vec<usize>,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbRow {
    #[serde(rename = "G")]
    pub transmissions: usize,
    #[serde(rename = "S")]
    pub sats: usize,
    #[serde(rename = "K")]
    pub subcarriers: usize,
    pub region: Region,
    pub crb_phi_d: f64,
}

pub fn crb_sweep(cfg: &ScenarioConfig, grid: &CrbGrid) -> Result<Vec<CrbRow>, ScenarioError> {
    if grid.transmissions.is_empty() || grid.sats.is_empty() || grid.subcarriers.is_empty() || grid.regions.is_empty() {
        return Err(ScenarioError::EmptyGrid);
    }
    if grid.transmissions.contains(&0) || grid.sats.contains(&0) || grid.subcarriers.contains(&0) {
        return Err(ScenarioError::Config("grid values must be positive".into()));
    }
    let max_s = *grid.sats.iter().max().expect("nonempty");
    let max_g = *grid.transmissions.iter().max().expect("nonempty");
    if max_s > cfg.satellites.len() {
        return Err(ScenarioError::Config(format!(
            "grid asks for {max_s} satellites, scenario has {}",
            cfg.satellites.len()
        )));
    }
    if cfg.riss.is_empty() {
        return Err(ScenarioError::Config("the sweep needs at least one RIS".into()));
    }
    let bias = draw_clock_biases(cfg, 0);
    let labels = labelled_truth(cfg, &bias);
    let n = labels
        .ris_visible
        .iter()
        .position(|v| v.iter().all(|&x| x))
        .ok_or_else(|| ScenarioError::Config("no step of the course is served by all RISs".into()))?;
    let user = &labels.truth.states[n];
    let atmosphere = cfg.atmosphere()?;
    let mut rows = Vec::new();
    for &k in &grid.subcarriers {
        let mut frame = cfg.frame.clone();
        frame.subcarriers = k;
        frame.transmissions = max_g;
        for &region in &grid.regions {
            // same draws for every environment
            let mut rng = stream(cfg.seed, k as u64, purpose::CRB);
            let full = draw_snapshot(cfg, &labels, n, &frame, region, Shadowing::Median, &atmosphere, &mut rng)?;
            for &s in &grid.sats {
                for &g in &grid.transmissions {
                    let snap = full.restrict(s, g);
                    let report = FimEvaluator::new(&snap).evaluate(user.into())?;
                    let layout = ObsLayout::new(s, snap.num_riss());
                    rows.push(CrbRow {
                        transmissions: g,
                        sats: s,
                        subcarriers: k,
                        region,
                        crb_phi_d: crb_phi_d(&report.fim.matrix, &layout)?,
                    });
                }
            }
        }
    }
    Ok(rows)
}
