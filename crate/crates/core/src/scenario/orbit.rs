//! Circular Keplerian orbits seen from a local scene frame.
//!
//! The Earth frame has its origin at the Earth centre and its z axis through
//! the scene anchor; the scene frame is the same frame shifted up by one
//! Earth radius, so the scene origin sits on the surface with z pointing up.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::SatelliteState;
use crate::manifold::RotationMatrix;

/// Gravitational parameter of the Earth (m^3/s^2).
pub const MU_EARTH: f64 = 3.986e14;
/// Equatorial Earth radius (m).
pub const EARTH_RADIUS: f64 = 6_378_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitElements {
    /// Height above the surface in metres.
    pub height_m: f64,
    pub inclination_deg: f64,
    /// Right ascension of the ascending node, measured in the anchor frame.
    pub raan_deg: f64,
    /// Argument of latitude at `t = 0`.
    pub phase_deg: f64,
}

impl OrbitElements {
    pub fn semi_major_axis(&self) -> f64 {
        EARTH_RADIUS + self.height_m
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.semi_major_axis().powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }

    /// Argument of latitude at time `t`.
    pub fn argument_of_latitude(&self, t: f64) -> f64 {
        self.phase_deg.to_radians() + self.mean_motion() * t
    }

    /// Position and velocity in the Earth frame at time `t`.
    pub fn earth_frame(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let a = self.semi_major_axis();
        let n = self.mean_motion();
        let u = self.argument_of_latitude(t);
        let plane = Rotation3::from_axis_angle(&Vector3::z_axis(), self.raan_deg.to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.inclination_deg.to_radians());
        let r = plane * Vector3::new(a * u.cos(), a * u.sin(), 0.0);
        let v = plane * Vector3::new(-a * n * u.sin(), a * n * u.cos(), 0.0);
        (r, v)
    }

    /// State in the scene frame, with the array boresight pointing at nadir.
    pub fn state(&self, t: f64) -> SatelliteState {
        let (r, v) = self.earth_frame(t);
        SatelliteState {
            position: r - Vector3::new(0.0, 0.0, EARTH_RADIUS),
            velocity: v,
            orientation: RotationMatrix::from_axes(-r, v),
        }
    }
}

/// States of all satellites at time `t`.
pub fn propagate_satellites(orbits: &[OrbitElements], t: f64) -> Vec<SatelliteState> {
    orbits.iter().map(|o| o.state(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::elevation_angle;
    use approx::assert_relative_eq;

    fn orbit() -> OrbitElements {
        OrbitElements { height_m: 500e3, inclination_deg: 90.0, raan_deg: 0.0, phase_deg: 90.0 }
    }

    #[test]
    fn period_and_speed_at_500_km() {
        let o = OrbitElements { height_m: 500e3, ..orbit() };
        let a: f64 = 6_878_000.0;
        let period = 2.0 * std::f64::consts::PI * (a.powi(3) / 3.986e14).sqrt();
        assert_relative_eq!(o.period(), period, max_relative = 1e-12);
        assert!((o.period() - 5677.0).abs() < 2.0);
        assert!((o.state(10.0).velocity.norm() - 7613.0).abs() < 2.0);
    }

    #[test]
    fn zero_time_reproduces_phase() {
        let o = OrbitElements { phase_deg: 37.5, ..orbit() };
        assert_eq!(o.argument_of_latitude(0.0), 37.5f64.to_radians());
        let (r, _) = o.earth_frame(0.0);
        let (a, u) = (o.semi_major_axis(), 37.5f64.to_radians());
        assert_relative_eq!(r, Vector3::new(a * u.cos(), 0.0, a * u.sin()), epsilon = 1e-6);
    }

    #[test]
    fn overhead_pass_points_boresight_at_nadir() {
        let s = orbit().state(0.0);
        assert_relative_eq!(s.position, Vector3::new(0.0, 0.0, 500e3), epsilon = 1e-6);
        assert_relative_eq!(s.orientation.matrix().column(0).into_owned(), -Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(
            elevation_angle(&s.position, &Vector3::zeros()),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-9
        );
        assert!(s.velocity.dot(&s.position).abs() < 1e-3 * s.velocity.norm() * s.position.norm());
    }

    #[test]
    fn velocity_is_time_derivative() {
        let o = OrbitElements { inclination_deg: 53.0, raan_deg: 20.0, phase_deg: 70.0, ..orbit() };
        let h = 1e-3;
        let fd = (o.state(5.0 + h).position - o.state(5.0 - h).position) / (2.0 * h);
        assert_relative_eq!(fd, o.state(5.0).velocity, max_relative = 1e-8);
    }
}
