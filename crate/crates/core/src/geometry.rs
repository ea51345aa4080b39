//! Satellite, RIS and user geometry and the channel parameters derived from it.
//!
//! All positions live in one local Cartesian frame (metres). A direction seen
//! from a body with orientation `R` is expressed in body coordinates as
//! `R^T (target - origin)`; azimuth is `atan2(y, x)` and elevation
//! `asin(z / |d|)`.

use nalgebra::{DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::manifold::{RotationMatrix, UeState};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance on `|z / |d||` above one before strict elevation evaluation fails.
const ASIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coincident endpoints: distance {0:e} m")]
    Degenerate(f64),
    #[error("elevation argument {0} outside [-1, 1]")]
    ElevationDomain(f64),
    #[error("bias vector has {got} entries but satellite index {index} was requested")]
    MissingBias { index: usize, got: usize },
}

/// How to treat `asin` arguments that leave `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsinPolicy {
    /// Fail unless the excess is floating-point noise.
    Strict,
    /// Clamp; used with non-orthonormal rotation blocks.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct SatelliteState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body x is the array boresight.
    pub orientation: RotationMatrix,
}

#[derive(Debug, Clone)]
pub struct RisState {
    pub position: Vector3<f64>,
    /// Body x is the surface normal.
    pub orientation: RotationMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Angles {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Angles {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }
}

/// Borrowed user kinematics; the rotation may be an arbitrary 3x3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct UserView<'a> {
    pub position: &'a Vector3<f64>,
    pub velocity: &'a Vector3<f64>,
    pub bias: &'a DVector<f64>,
    pub rotation: &'a Matrix3<f64>,
}

impl<'a> From<&'a UeState> for UserView<'a> {
    fn from(z: &'a UeState) -> Self {
        Self { position: &z.position, velocity: &z.velocity, bias: &z.bias, rotation: z.orientation.matrix() }
    }
}

/// Azimuth/elevation of global direction `d` in the body frame of `rotation`.
pub fn body_angles(rotation: &Matrix3<f64>, d: &Vector3<f64>, policy: AsinPolicy) -> Result<Angles, GeometryError> {
    let dist = d.norm();
    if dist == 0.0 || !dist.is_finite() {
        return Err(GeometryError::Degenerate(dist));
    }
    let b = rotation.transpose() * d;
    let arg = b.z / dist;
    if policy == AsinPolicy::Strict && arg.abs() > 1.0 + ASIN_SLACK {
        return Err(GeometryError::ElevationDomain(arg));
    }
    // azimuth in (-pi, pi]; atan2 gives -pi for a signed-zero y
    let az = b.y.atan2(b.x);
    let az = if az == -std::f64::consts::PI { std::f64::consts::PI } else { az };
    Ok(Angles::new(az, arg.clamp(-1.0, 1.0).asin()))
}

/// Direct satellite-user link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatLinkParams {
    /// Hz.
    pub doppler: f64,
    /// Departure angles at the satellite.
    pub aod: Angles,
    /// Arrival angles at the user.
    pub aoa: Angles,
    /// Seconds, including the satellite clock bias.
    pub delay: f64,
}

/// RIS-user link parameters; `delays[s]` is the RIS-user delay plus the bias
/// of satellite `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisLinkParams {
    pub doppler: f64,
    /// Departure angles at the RIS.
    pub aod: Angles,
    /// Arrival angles at the user.
    pub aoa: Angles,
    pub delays: Vec<f64>,
}

/// Known satellite-RIS parameters (both endpoints are known).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatRisParams {
    pub doppler: f64,
    pub delay: f64,
    /// Departure angles at the satellite.
    pub aod: Angles,
    /// Arrival angles at the RIS.
    pub aoa: Angles,
}

fn bias_of(user: &UserView, s: usize) -> Result<f64, GeometryError> {
    user.bias.get(s).copied().ok_or(GeometryError::MissingBias { index: s, got: user.bias.len() })
}

/// Direct-link parameters between satellite `s` and the user.
pub fn sat_link_params(
    sat: &SatelliteState,
    user: UserView,
    s: usize,
    wavelength: f64,
    policy: AsinPolicy,
) -> Result<SatLinkParams, GeometryError> {
    let d = user.position - sat.position;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(GeometryError::Degenerate(dist));
    }
    Ok(SatLinkParams {
        doppler: (sat.velocity - user.velocity).dot(&d) / (wavelength * dist),
        aod: body_angles(sat.orientation.matrix(), &d, policy)?,
        aoa: body_angles(user.rotation, &(-d), policy)?,
        delay: dist / SPEED_OF_LIGHT + bias_of(&user, s)?,
    })
}

/// RIS-user link parameters, one delay per satellite bias.
pub fn ris_link_params(
    ris: &RisState,
    user: UserView,
    wavelength: f64,
    policy: AsinPolicy,
) -> Result<RisLinkParams, GeometryError> {
    let d = ris.position - user.position;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(GeometryError::Degenerate(dist));
    }
    let range = dist / SPEED_OF_LIGHT;
    Ok(RisLinkParams {
        doppler: user.velocity.dot(&d) / (wavelength * dist),
        aod: body_angles(ris.orientation.matrix(), &(-d), policy)?,
        aoa: body_angles(user.rotation, &d, policy)?,
        delays: user.bias.iter().map(|b| range + b).collect(),
    })
}

/// Parameters of the satellite-RIS leg.
pub fn sat_ris_params(sat: &SatelliteState, ris: &RisState, wavelength: f64) -> Result<SatRisParams, GeometryError> {
    let d = ris.position - sat.position;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(GeometryError::Degenerate(dist));
    }
    Ok(SatRisParams {
        doppler: sat.velocity.dot(&d) / (wavelength * dist),
        delay: dist / SPEED_OF_LIGHT,
        aod: body_angles(sat.orientation.matrix(), &d, AsinPolicy::Strict)?,
        aoa: body_angles(ris.orientation.matrix(), &(-d), AsinPolicy::Strict)?,
    })
}

/// Elevation of `target` above the global x-y plane as seen from `origin`.
pub fn elevation_angle(target: &Vector3<f64>, origin: &Vector3<f64>) -> f64 {
    let d = target - origin;
    let n = d.norm();
    if n == 0.0 {
        return 0.0;
    }
    (d.z / n).clamp(-1.0, 1.0).asin()
}

/// Physical kind of an observation entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Hz.
    Doppler,
    /// Radians.
    Angle,
    /// Seconds.
    Delay,
}

/// Index map of the stacked observation vector
/// `[nu (R); phi_D (2R); phi_A (2R); per satellite: u, theta_D (2), theta_A (2), tau, eps (R)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub sats: usize,
    pub riss: usize,
}

impl ObsLayout {
    pub fn new(sats: usize, riss: usize) -> Self {
        Self { sats, riss }
    }

    /// `5R + S(R + 6)`.
    pub fn dim(&self) -> usize {
        self.shared_dim() + self.sats * self.sat_block_dim()
    }

    /// Length of the RIS block shared by all satellites, `5R`.
    pub fn shared_dim(&self) -> usize {
        5 * self.riss
    }

    /// Length of one satellite block, `R + 6`.
    pub fn sat_block_dim(&self) -> usize {
        self.riss + 6
    }

    pub fn ris_doppler(&self, r: usize) -> usize {
        r
    }

    /// Index of the azimuth; elevation follows.
    pub fn ris_aod(&self, r: usize) -> usize {
        self.riss + 2 * r
    }

    pub fn ris_aoa(&self, r: usize) -> usize {
        3 * self.riss + 2 * r
    }

    pub fn sat_block(&self, s: usize) -> usize {
        self.shared_dim() + s * self.sat_block_dim()
    }

    pub fn sat_doppler(&self, s: usize) -> usize {
        self.sat_block(s)
    }

    pub fn sat_aod(&self, s: usize) -> usize {
        self.sat_block(s) + 1
    }

    pub fn sat_aoa(&self, s: usize) -> usize {
        self.sat_block(s) + 3
    }

    pub fn sat_delay(&self, s: usize) -> usize {
        self.sat_block(s) + 5
    }

    pub fn ris_delay(&self, s: usize, r: usize) -> usize {
        self.sat_block(s) + 6 + r
    }

    /// Range of RIS AoD entries, the block the position bound is reported on.
    pub fn ris_aod_range(&self) -> std::ops::Range<usize> {
        self.riss..3 * self.riss
    }

    /// Physical kind of entry `i`.
    pub fn kind(&self, i: usize) -> ParamKind {
        let r = self.riss;
        if i < r {
            return ParamKind::Doppler;
        }
        if i < 5 * r {
            return ParamKind::Angle;
        }
        match (i - self.shared_dim()) % self.sat_block_dim() {
            0 => ParamKind::Doppler,
            1..=4 => ParamKind::Angle,
            _ => ParamKind::Delay,
        }
    }

    /// Indices holding azimuth angles.
    pub fn azimuth_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for r in 0..self.riss {
            out.push(self.ris_aod(r));
            out.push(self.ris_aoa(r));
        }
        for s in 0..self.sats {
            out.push(self.sat_aod(s));
            out.push(self.sat_aoa(s));
        }
        out.sort_unstable();
        out
    }

    /// Indices that involve RIS `r` (shared block and per-satellite delays).
    pub fn ris_indices(&self, r: usize) -> Vec<usize> {
        let mut out =
            vec![self.ris_doppler(r), self.ris_aod(r), self.ris_aod(r) + 1, self.ris_aoa(r), self.ris_aoa(r) + 1];
        out.extend((0..self.sats).map(|s| self.ris_delay(s, r)));
        out
    }
}

/// All user-dependent channel parameters at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub sats: Vec<SatLinkParams>,
    pub riss: Vec<RisLinkParams>,
}

impl LinkParams {
    pub fn compute(
        sats: &[SatelliteState],
        riss: &[RisState],
        user: UserView,
        wavelength: f64,
        policy: AsinPolicy,
    ) -> Result<Self, GeometryError> {
        let sat_params = sats
            .iter()
            .enumerate()
            .map(|(s, sat)| sat_link_params(sat, user, s, wavelength, policy))
            .collect::<Result<Vec<_>, _>>()?;
        let ris_params =
            riss.iter().map(|ris| ris_link_params(ris, user, wavelength, policy)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { sats: sat_params, riss: ris_params })
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(self.sats.len(), self.riss.len())
    }

    /// Stacks the parameters in [`ObsLayout`] order.
    pub fn to_vector(&self) -> DVector<f64> {
        let l = self.layout();
        let mut v = DVector::zeros(l.dim());
        for (r, p) in self.riss.iter().enumerate() {
            v[l.ris_doppler(r)] = p.doppler;
            v[l.ris_aod(r)] = p.aod.azimuth;
            v[l.ris_aod(r) + 1] = p.aod.elevation;
            v[l.ris_aoa(r)] = p.aoa.azimuth;
            v[l.ris_aoa(r) + 1] = p.aoa.elevation;
        }
        for (s, p) in self.sats.iter().enumerate() {
            v[l.sat_doppler(s)] = p.doppler;
            v[l.sat_aod(s)] = p.aod.azimuth;
            v[l.sat_aod(s) + 1] = p.aod.elevation;
            v[l.sat_aoa(s)] = p.aoa.azimuth;
            v[l.sat_aoa(s) + 1] = p.aoa.elevation;
            v[l.sat_delay(s)] = p.delay;
            for r in 0..l.riss {
                v[l.ris_delay(s, r)] = self.riss[r].delays[s];
            }
        }
        v
    }

    /// Inverse of [`LinkParams::to_vector`].
    pub fn from_vector(layout: ObsLayout, v: &DVector<f64>) -> Self {
        let l = layout;
        let riss = (0..l.riss)
            .map(|r| RisLinkParams {
                doppler: v[l.ris_doppler(r)],
                aod: Angles::new(v[l.ris_aod(r)], v[l.ris_aod(r) + 1]),
                aoa: Angles::new(v[l.ris_aoa(r)], v[l.ris_aoa(r) + 1]),
                delays: (0..l.sats).map(|s| v[l.ris_delay(s, r)]).collect(),
            })
            .collect();
        let sats = (0..l.sats)
            .map(|s| SatLinkParams {
                doppler: v[l.sat_doppler(s)],
                aod: Angles::new(v[l.sat_aod(s)], v[l.sat_aod(s) + 1]),
                aoa: Angles::new(v[l.sat_aoa(s)], v[l.sat_aoa(s) + 1]),
                delay: v[l.sat_delay(s)],
            })
            .collect();
        Self { sats, riss }
    }
}

/// Noise-free observation vector `h(zeta)`.
pub fn assemble_observation(
    user: UserView,
    sats: &[SatelliteState],
    riss: &[RisState],
    wavelength: f64,
    policy: AsinPolicy,
) -> Result<DVector<f64>, GeometryError> {
    Ok(LinkParams::compute(sats, riss, user, wavelength, policy)?.to_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn user(p: Vector3<f64>, v: Vector3<f64>, sats: usize) -> UeState {
        UeState { position: p, velocity: v, bias: DVector::zeros(sats), orientation: RotationMatrix::identity() }
    }

    #[test]
    fn overhead_satellite() {
        let sat = SatelliteState {
            position: Vector3::new(0.0, 0.0, 1000.0),
            velocity: Vector3::new(0.0, 0.0, -10.0),
            orientation: RotationMatrix::identity(),
        };
        let ue = user(Vector3::zeros(), Vector3::zeros(), 1);
        let p = sat_link_params(&sat, (&ue).into(), 0, 1.0, AsinPolicy::Strict).unwrap();
        assert_relative_eq!(p.doppler, 10.0);
        assert_relative_eq!(p.aod.azimuth, 0.0);
        assert_relative_eq!(p.aod.elevation, -PI / 2.0);
        assert_relative_eq!(p.aoa.azimuth, 0.0);
        assert_relative_eq!(p.aoa.elevation, PI / 2.0);
        assert_relative_eq!(p.delay, 1000.0 / SPEED_OF_LIGHT);
    }

    #[test]
    fn ris_ahead_of_moving_user() {
        let ris = RisState { position: Vector3::new(10.0, 0.0, 0.0), orientation: RotationMatrix::identity() };
        let ue = user(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), 2);
        let p = ris_link_params(&ris, (&ue).into(), 1.0, AsinPolicy::Strict).unwrap();
        assert_relative_eq!(p.doppler, 1.0);
        assert_relative_eq!(p.aod.azimuth, PI);
        assert_relative_eq!(p.aod.elevation, 0.0);
        assert_relative_eq!(p.aoa.azimuth, 0.0);
        assert_relative_eq!(p.aoa.elevation, 0.0);
        assert_eq!(p.delays.len(), 2);
    }

    #[test]
    fn coincident_points_fail() {
        let ris = RisState { position: Vector3::zeros(), orientation: RotationMatrix::identity() };
        let ue = user(Vector3::zeros(), Vector3::zeros(), 0);
        assert!(matches!(
            ris_link_params(&ris, (&ue).into(), 1.0, AsinPolicy::Strict),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn lenient_policy_clamps_scaled_rotation() {
        let m = Matrix3::identity() * 1.2;
        let d = Vector3::new(0.0, 0.0, 5.0);
        assert!(body_angles(&m, &d, AsinPolicy::Strict).is_err());
        let a = body_angles(&m, &d, AsinPolicy::Lenient).unwrap();
        assert_relative_eq!(a.elevation, PI / 2.0);
    }

    #[test]
    fn layout_dimensions_and_roundtrip() {
        let l = ObsLayout::new(3, 2);
        assert_eq!(l.dim(), 5 * 2 + 3 * (2 + 6));
        assert_eq!(ObsLayout::new(5, 2).dim(), 50);
        assert_eq!(ObsLayout::new(1, 0).dim(), 6);
        let v = DVector::from_fn(l.dim(), |i, _| i as f64);
        let p = LinkParams::from_vector(l, &v);
        assert_eq!(p.to_vector(), v);
        // indices are a partition of 0..dim
        let mut seen = vec![0; l.dim()];
        for r in 0..2 {
            for i in l.ris_indices(r) {
                seen[i] += 1;
            }
        }
        for s in 0..3 {
            for i in l.sat_block(s)..l.sat_block(s) + 6 {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(l.azimuth_indices().len(), 2 * 2 + 2 * 3);
        assert!(l.azimuth_indices().iter().all(|&i| l.kind(i) == ParamKind::Angle));
        assert_eq!(l.kind(l.ris_doppler(1)), ParamKind::Doppler);
        assert_eq!(l.kind(l.sat_doppler(2)), ParamKind::Doppler);
        assert_eq!(l.kind(l.ris_aoa(1) + 1), ParamKind::Angle);
        assert_eq!(l.kind(l.sat_aoa(0) + 1), ParamKind::Angle);
        assert_eq!(l.kind(l.sat_delay(1)), ParamKind::Delay);
        assert_eq!(l.kind(l.ris_delay(2, 1)), ParamKind::Delay);
    }

    #[test]
    fn doppler_matches_range_rate() {
        // Doppler equals minus the range rate over lambda; check by finite differences
        let sat = SatelliteState {
            position: Vector3::new(3e5, -2e5, 5e5),
            velocity: Vector3::new(-7000.0, 1500.0, 300.0),
            orientation: RotationMatrix::from_euler_zyx(0.2, 1.0, -0.4),
        };
        let ue = user(Vector3::new(10.0, 20.0, 1.5), Vector3::new(12.0, -3.0, 0.0), 1);
        let lambda = SPEED_OF_LIGHT / 12.7e9;
        let p = sat_link_params(&sat, (&ue).into(), 0, lambda, AsinPolicy::Strict).unwrap();
        let h = 1e-3;
        let range = |t: f64| ((sat.position + sat.velocity * t) - (ue.position + ue.velocity * t)).norm();
        let rate = (range(h) - range(-h)) / (2.0 * h);
        assert_relative_eq!(p.doppler, -rate / lambda, max_relative = 1e-6);
    }

    #[test]
    fn elevation_of_overhead_and_horizontal() {
        assert_relative_eq!(elevation_angle(&Vector3::new(0.0, 0.0, 5.0), &Vector3::zeros()), PI / 2.0);
        assert_relative_eq!(elevation_angle(&Vector3::new(3.0, 4.0, 0.0), &Vector3::zeros()), 0.0);
    }
}
