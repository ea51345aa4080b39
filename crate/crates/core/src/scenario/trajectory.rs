//! Ground truth user motion, environment regions and RIS service zones.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel::Region;
use crate::filter::{propagate, ImuSample};
use crate::geometry::RisState;
use crate::manifold::{RotationMatrix, UeState};

/// One piece of the motion profile, held for `duration_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub duration_s: f64,
    /// Global-frame acceleration (m/s^2).
    pub accel: [f64; 3],
    /// Body yaw rate (rad/s).
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub start: [f64; 3],
    pub velocity: [f64; 3],
    /// Initial yaw, pitch, roll in degrees.
    pub attitude_deg: [f64; 3],
    /// Segments in order; the last one is held past its duration.
    pub segments: Vec<MotionSegment>,
}

/// Region boundary along the travelled distance: the region applies up to
/// `until_m`. The last entry covers everything beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionInterval {
    pub region: Region,
    pub until_m: f64,
}

/// Region at travelled distance `s`.
pub fn region_at(intervals: &[RegionInterval], s: f64) -> Region {
    intervals.iter().find(|iv| s < iv.until_m).or(intervals.last()).map(|iv| iv.region).unwrap_or(Region::Rural)
}

/// Reporting segment: the region, with urban split by RIS visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Rural,
    Suburban,
    UrbanInvisible,
    UrbanVisible,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::Rural, Segment::Suburban, Segment::UrbanInvisible, Segment::UrbanVisible];

    pub fn new(region: Region, ris_visible: bool) -> Self {
        match (region, ris_visible) {
            (Region::Rural, _) => Segment::Rural,
            (Region::Suburban, _) => Segment::Suburban,
            (Region::Urban, false) => Segment::UrbanInvisible,
            (Region::Urban, true) => Segment::UrbanVisible,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Segment::Rural => "rural",
            Segment::Suburban => "suburban",
            Segment::UrbanInvisible => "urban_invisible",
            Segment::UrbanVisible => "urban_visible",
        }
    }
}

/// A deployed surface and the area it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    pub position: [f64; 3],
    /// Direction of the surface normal (array boresight).
    pub normal: [f64; 3],
    /// Service zone as a polygon in the ground (x, y) plane.
    pub zone: Vec<[f64; 2]>,
}

impl RisConfig {
    pub fn state(&self) -> RisState {
        RisState {
            position: Vector3::from(self.position),
            orientation: RotationMatrix::from_axes(Vector3::from(self.normal), Vector3::z()),
        }
    }

    /// In front of the surface and inside the zone polygon.
    pub fn serves(&self, p: &Vector3<f64>) -> bool {
        let front = (p - Vector3::from(self.position)).dot(&Vector3::from(self.normal)) > 0.0;
        front && point_in_polygon(&Vector2::new(p.x, p.y), &self.zone)
    }
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(q: &Vector2<f64>, poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > q.y) != (yj > q.y) && q.x < (xj - xi) * (q.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Ground truth over `steps` intervals: `steps + 1` states and the exact
/// acceleration and rotation increment of each interval.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub states: Vec<UeState>,
    pub accel: Vec<Vector3<f64>>,
    pub rotation: Vec<RotationMatrix>,
    /// Travelled distance at each state.
    pub distance: Vec<f64>,
}

impl TruthTrajectory {
    pub fn steps(&self) -> usize {
        self.accel.len()
    }

    /// The exact IMU reading of interval `n` (from state `n` to `n + 1`).
    pub fn exact_imu(&self, n: usize) -> ImuSample {
        ImuSample { accel: self.accel[n], rotation: self.rotation[n] }
    }
}

fn segment_at(segments: &[MotionSegment], t: f64) -> Option<&MotionSegment> {
    let mut end = 0.0;
    for seg in segments {
        end += seg.duration_s;
        if t < end {
            return Some(seg);
        }
    }
    segments.last()
}

/// Integrates the motion profile with the filter's own process model, so the
/// kinematic relation between consecutive states holds exactly.
pub fn generate_trajectory(
    cfg: &TrajectoryConfig,
    bias: &nalgebra::DVector<f64>,
    steps: usize,
    dt: f64,
) -> TruthTrajectory {
    let [yaw, pitch, roll] = cfg.attitude_deg;
    let mut state = UeState {
        position: Vector3::from(cfg.start),
        velocity: Vector3::from(cfg.velocity),
        bias: bias.clone(),
        orientation: RotationMatrix::from_euler_zyx(yaw.to_radians(), pitch.to_radians(), roll.to_radians()),
    };
    let mut out = TruthTrajectory {
        states: Vec::with_capacity(steps + 1),
        accel: Vec::with_capacity(steps),
        rotation: Vec::with_capacity(steps),
        distance: Vec::with_capacity(steps + 1),
    };
    let mut travelled = 0.0;
    out.states.push(state.clone());
    out.distance.push(0.0);
    for n in 0..steps {
        let (a, w) = match segment_at(&cfg.segments, n as f64 * dt) {
            Some(seg) => (Vector3::from(seg.accel), seg.yaw_rate),
            None => (Vector3::zeros(), 0.0),
        };
        let imu = ImuSample { accel: a, rotation: RotationMatrix::identity().boxplus(&Vector3::new(0.0, 0.0, w * dt)) };
        let next = propagate(&state, &imu, dt);
        travelled += (next.position - state.position).norm();
        out.accel.push(a);
        out.rotation.push(imu.rotation);
        out.states.push(next.clone());
        out.distance.push(travelled);
        state = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn cfg(segments: Vec<MotionSegment>) -> TrajectoryConfig {
        TrajectoryConfig { start: [0.0; 3], velocity: [0.0; 3], attitude_deg: [0.0; 3], segments }
    }

    #[test]
    fn constant_acceleration_double_integrates() {
        let c = cfg(vec![MotionSegment { duration_s: 100.0, accel: [1.0, 0.0, 0.0], yaw_rate: 0.0 }]);
        let t = generate_trajectory(&c, &DVector::zeros(0), 10, 1.0);
        for (n, s) in t.states.iter().enumerate() {
            assert_relative_eq!(s.position.x, (n * n) as f64 / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn static_profile_is_straight_line() {
        let mut c = cfg(vec![MotionSegment { duration_s: 5.0, accel: [0.0; 3], yaw_rate: 0.0 }]);
        c.velocity = [3.0, 4.0, 0.0];
        let t = generate_trajectory(&c, &DVector::zeros(1), 6, 0.5);
        assert_eq!(t.states.len(), 7);
        assert_relative_eq!(t.states[6].position, Vector3::new(9.0, 12.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(t.distance[6], 15.0, epsilon = 1e-12);
        assert!(t.states.iter().all(|s| s.orientation == RotationMatrix::identity()));
    }

    #[test]
    fn kinematics_are_exact() {
        let c = cfg(vec![
            MotionSegment { duration_s: 3.0, accel: [0.2, -0.1, 0.0], yaw_rate: 0.05 },
            MotionSegment { duration_s: 3.0, accel: [-0.1, 0.3, 0.0], yaw_rate: -0.02 },
        ]);
        let t = generate_trajectory(&c, &DVector::from_element(2, 1e-7), 8, 1.0);
        for n in 0..t.steps() {
            assert_eq!(propagate(&t.states[n], &t.exact_imu(n), 1.0), t.states[n + 1]);
        }
        assert_relative_eq!(t.accel[5], Vector3::new(-0.1, 0.3, 0.0));
        assert_relative_eq!(t.accel[7], Vector3::new(-0.1, 0.3, 0.0));
    }

    #[test]
    fn every_distance_gets_one_region() {
        let iv = [
            RegionInterval { region: Region::Rural, until_m: 300.0 },
            RegionInterval { region: Region::Suburban, until_m: 600.0 },
            RegionInterval { region: Region::Urban, until_m: 900.0 },
        ];
        assert_eq!(region_at(&iv, 0.0), Region::Rural);
        assert_eq!(region_at(&iv, 299.9), Region::Rural);
        assert_eq!(region_at(&iv, 300.0), Region::Suburban);
        assert_eq!(region_at(&iv, 5000.0), Region::Urban);
    }

    #[test]
    fn zone_requires_front_side_and_polygon() {
        let ris = RisConfig {
            position: [790.0, 25.0, 10.0],
            normal: [0.0, -1.0, 0.0],
            zone: vec![[700.0, -100.0], [900.0, -100.0], [900.0, 25.0], [700.0, 25.0]],
        };
        assert!(ris.serves(&Vector3::new(800.0, 0.0, 0.0)));
        assert!(!ris.serves(&Vector3::new(650.0, 0.0, 0.0)));
        assert!(!ris.serves(&Vector3::new(800.0, 30.0, 0.0)));
        let st = ris.state();
        assert_relative_eq!(st.orientation.matrix().column(0).into_owned(), Vector3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn segments_split_urban_by_visibility() {
        assert_eq!(Segment::new(Region::Urban, true), Segment::UrbanVisible);
        assert_eq!(Segment::new(Region::Urban, false), Segment::UrbanInvisible);
        assert_eq!(Segment::new(Region::Rural, true), Segment::Rural);
    }
}
