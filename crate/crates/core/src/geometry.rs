//! Planar angles, direction bins, distances, passby detection, pairwise
//! spatial features and yaw quaternions.
//!
//! Angle convention shared by every module: `ccw_angle` is the usual
//! counterclockwise angle from +x. A rotation angle is
//! `(ccw(facing) - ccw(object)) mod 360`, so turning right increases it.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{footprint2d, normalize_degrees, Rect2D, Scene, Vec2, Vec3};

/// Labels ignored as obstacles by default.
pub const DEFAULT_NON_OBSTACLE_LABELS: [&str; 3] = ["floor", "ceiling", "wall"];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("angle {0} outside [0, 360)")]
    Range(f64),
    #[error("unknown object id `{0}`")]
    UnknownId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DirectionBin {
    Front,
    Right,
    Back,
    Left,
}

impl DirectionBin {
    /// Clockwise order starting at Front.
    pub const ALL: [DirectionBin; 4] = [
        DirectionBin::Front,
        DirectionBin::Right,
        DirectionBin::Back,
        DirectionBin::Left,
    ];

    pub fn clockwise_next(self) -> DirectionBin {
        match self {
            DirectionBin::Front => DirectionBin::Right,
            DirectionBin::Right => DirectionBin::Back,
            DirectionBin::Back => DirectionBin::Left,
            DirectionBin::Left => DirectionBin::Front,
        }
    }

    /// Key used in scene-graph JSON.
    pub fn json_key(self) -> &'static str {
        match self {
            DirectionBin::Front => "Front",
            DirectionBin::Right => "Right",
            DirectionBin::Back => "Backwards",
            DirectionBin::Left => "Left",
        }
    }

    /// Word used in the situation template.
    pub fn situation_word(self) -> &'static str {
        match self {
            DirectionBin::Front => "front",
            DirectionBin::Right => "right",
            DirectionBin::Back => "backward",
            DirectionBin::Left => "left",
        }
    }

    /// Agent-relative phrase, e.g. "on your left" or "behind you".
    pub fn phrase(self) -> &'static str {
        match self {
            DirectionBin::Front => "in front of you",
            DirectionBin::Right => "on your right",
            DirectionBin::Back => "behind you",
            DirectionBin::Left => "on your left",
        }
    }
}

impl fmt::Display for DirectionBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionBin::Front => "front",
            DirectionBin::Right => "right",
            DirectionBin::Back => "back",
            DirectionBin::Left => "left",
        })
    }
}

/// `f_ij = [d, sin θh, cos θh, sin θv, cos θv]` between two box centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialFeature {
    pub d: f64,
    pub sin_h: f64,
    pub cos_h: f64,
    pub sin_v: f64,
    pub cos_v: f64,
}

impl SpatialFeature {
    pub const DEGENERATE: SpatialFeature = SpatialFeature {
        d: 0.0,
        sin_h: 0.0,
        cos_h: 1.0,
        sin_v: 0.0,
        cos_v: 1.0,
    };

    pub fn to_array(&self) -> [f64; 5] {
        [self.d, self.sin_h, self.cos_h, self.sin_v, self.cos_v]
    }

    pub fn horizontal_degrees(&self) -> f64 {
        normalize_degrees(self.sin_h.atan2(self.cos_h).to_degrees())
    }

    pub fn vertical_degrees(&self) -> f64 {
        self.sin_v.atan2(self.cos_v).to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub w: f64,
}

impl Quaternion {
    pub fn norm(&self) -> f64 {
        (self.qx * self.qx + self.qy * self.qy + self.qz * self.qz + self.w * self.w).sqrt()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.qx, self.qy, self.qz, self.w]
    }
}

/// Counterclockwise angle of `to - from` from +x, in `[0, 360)`.
pub fn ccw_angle(from: Vec2, to: Vec2) -> Result<f64, GeometryError> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::Degenerate(format!(
            "angle from {from:?} to itself"
        )));
    }
    Ok(normalize_degrees(dy.atan2(dx).to_degrees()))
}

/// Degrees the agent at `stand`, facing `facing_point`, turns right to face
/// `object_center`.
pub fn rotation_angle(stand: Vec2, facing_point: Vec2, object_center: Vec2) -> Result<f64, GeometryError> {
    let facing = ccw_angle(stand, facing_point)?;
    let object = ccw_angle(stand, object_center)?;
    Ok(normalize_degrees(facing - object))
}

/// Half-open 90° sectors; a boundary angle belongs to the clockwise-next bin.
pub fn classify_direction(angle: f64) -> Result<DirectionBin, GeometryError> {
    if !(0.0..360.0).contains(&angle) {
        return Err(GeometryError::Range(angle));
    }
    Ok(if !(45.0..315.0).contains(&angle) {
        DirectionBin::Front
    } else if angle < 135.0 {
        DirectionBin::Right
    } else if angle < 225.0 {
        DirectionBin::Back
    } else {
        DirectionBin::Left
    })
}

pub fn euclid_dist(p: Vec3, q: Vec3) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn dist2d(p: Vec2, q: Vec2) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Closed segment `ab` against a closed rectangle (Liang-Barsky clipping).
pub fn segment_intersects_rect(a: Vec2, b: Vec2, rect: &Rect2D) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for k in 0..2 {
        if d[k] == 0.0 {
            if a[k] < rect.min[k] || a[k] > rect.max[k] {
                return false;
            }
            continue;
        }
        let mut lo = (rect.min[k] - a[k]) / d[k];
        let mut hi = (rect.max[k] - a[k]) / d[k];
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Options for passby detection.
#[derive(Debug, Clone, PartialEq)]
pub struct PassbyConfig {
    pub non_obstacle_labels: BTreeSet<String>,
}

impl Default for PassbyConfig {
    fn default() -> Self {
        PassbyConfig {
            non_obstacle_labels: DEFAULT_NON_OBSTACLE_LABELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Objects whose footprint crosses the straight path from `stand` to the
/// target's footprint center, nearest first.
pub fn passby_objects(
    scene: &Scene,
    stand: Vec2,
    target_id: &str,
    excluded: &BTreeSet<String>,
    config: &PassbyConfig,
) -> Result<Vec<String>, GeometryError> {
    let target = scene
        .object(target_id)
        .ok_or_else(|| GeometryError::UnknownId(target_id.to_string()))?;
    let goal = footprint2d(target).center();
    let mut hits: Vec<(f64, &str)> = scene
        .objects
        .iter()
        .filter(|o| {
            o.id != target_id
                && !excluded.contains(&o.id)
                && !config.non_obstacle_labels.contains(&o.label)
        })
        .filter_map(|o| {
            let fp = footprint2d(o);
            segment_intersects_rect(stand, goal, &fp).then(|| (dist2d(stand, fp.center()), o.id.as_str()))
        })
        .collect();
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(b.1)));
    Ok(hits.into_iter().map(|(_, id)| id.to_string()).collect())
}

/// Spatial feature from center `from` to center `to`.
pub fn spatial_feature(from: Vec3, to: Vec3) -> SpatialFeature {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dz = to[2] - from[2];
    let horizontal = dx.hypot(dy);
    let d = euclid_dist(from, to);
    if d == 0.0 {
        return SpatialFeature::DEGENERATE;
    }
    let (sin_h, cos_h) = if horizontal == 0.0 {
        (0.0, 1.0)
    } else {
        (dy / horizontal, dx / horizontal)
    };
    // θv = atan(Δz / horizontal) in [-90°, 90°]; sin/cos straight from the triangle
    let (sin_v, cos_v) = (dz / d, horizontal / d);
    SpatialFeature {
        d,
        sin_h,
        cos_h,
        sin_v,
        cos_v,
    }
}

/// K×K pairwise features, row-major: entry `(i, j)` at `i * K + j`.
pub fn pairwise_features(centers: &[Vec3]) -> Vec<Vec<SpatialFeature>> {
    centers
        .iter()
        .map(|&ci| centers.iter().map(|&cj| spatial_feature(ci, cj)).collect())
        .collect()
}

/// Rotation about +z for a facing direction measured counterclockwise from +y.
pub fn yaw_to_quaternion(yaw_degrees: f64) -> Quaternion {
    let (s, c) = (yaw_degrees.to_radians() / 2.0).sin_cos();
    Quaternion {
        qx: 0.0,
        qy: 0.0,
        qz: s,
        w: c,
    }
}

/// Facing yaw (counterclockwise from +y, in `(-180, 180]`) for looking from
/// `stand` toward `target`.
pub fn facing_yaw(stand: Vec2, target: Vec2) -> Result<f64, GeometryError> {
    let yaw = normalize_degrees(ccw_angle(stand, target)? - 90.0);
    Ok(if yaw > 180.0 { yaw - 360.0 } else { yaw })
}

/// Smallest absolute difference between two angles in degrees.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = normalize_degrees(a - b);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ccw_examples() {
        assert_eq!(ccw_angle([0.0, 0.0], [1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(ccw_angle([0.0, 0.0], [0.0, 1.0]).unwrap(), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ccw_angle([0.0, 0.0], [-1.0, -1.0]).unwrap(), 225.0, epsilon = 1e-12);
        assert!(matches!(
            ccw_angle([1.0, 1.0], [1.0, 1.0]),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn rotation_examples() {
        let s = [0.0, 0.0];
        let f = [0.0, 1.0];
        assert_abs_diff_eq!(rotation_angle(s, f, [1.0, 0.0]).unwrap(), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rotation_angle(s, f, [0.0, 2.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rotation_angle(s, f, [-1.0, 0.0]).unwrap(), 270.0, epsilon = 1e-12);
        assert!(rotation_angle(s, s, [1.0, 0.0]).is_err());
    }

    #[test]
    fn classify_examples_and_boundaries() {
        use DirectionBin::*;
        assert_eq!(classify_direction(0.0).unwrap(), Front);
        assert_eq!(classify_direction(90.0).unwrap(), Right);
        assert_eq!(classify_direction(45.0).unwrap(), Right);
        assert_eq!(classify_direction(135.0).unwrap(), Back);
        assert_eq!(classify_direction(225.0).unwrap(), Left);
        assert_eq!(classify_direction(315.0).unwrap(), Front);
        assert_eq!(classify_direction(44.999).unwrap(), Front);
        assert_eq!(classify_direction(359.999).unwrap(), Front);
        assert!(classify_direction(360.0).is_err());
        assert!(classify_direction(-0.5).is_err());
        assert!(classify_direction(f64::NAN).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclid_dist([0.0; 3], [3.0, 4.0, 0.0]), 5.0);
        assert_eq!(euclid_dist([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 0.0);
        assert_eq!(euclid_dist([1.0, 2.0, 3.0], [4.0, 6.0, 3.0]), 5.0);
    }

    #[test]
    fn segment_rect_examples() {
        let through = Rect2D::new([1.5, -0.5], [2.5, 0.5]);
        let away = Rect2D::new([1.5, 2.5], [2.5, 3.5]);
        assert!(segment_intersects_rect([0.0, 0.0], [4.0, 0.0], &through));
        assert!(!segment_intersects_rect([0.0, 0.0], [4.0, 0.0], &away));
        // touching an edge counts (closed sets)
        let touch = Rect2D::new([1.0, 0.0], [2.0, 1.0]);
        assert!(segment_intersects_rect([0.0, 0.0], [4.0, 0.0], &touch));
        // stops short of the rectangle
        assert!(!segment_intersects_rect([0.0, 0.0], [1.4, 0.0], &through));
        // degenerate segment
        assert!(segment_intersects_rect([2.0, 0.0], [2.0, 0.0], &through));
        assert!(!segment_intersects_rect([0.0, 0.0], [0.0, 0.0], &through));
    }

    #[test]
    fn feature_examples() {
        let f = pairwise_features(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(f[0][1].to_array(), [1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(f[0][0].to_array(), [0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(f[1][1].to_array(), [0.0, 0.0, 1.0, 0.0, 1.0]);

        let f = pairwise_features(&[[0.0, 0.0, 0.0], [0.0, 3.0, 4.0]]);
        let got = f[0][1].to_array();
        // d = 5, θh = 90°, θv = atan(4/3): sin 0.8, cos 0.6
        let want = [5.0, 1.0, 0.0, 0.8, 0.6];
        for k in 0..5 {
            assert_abs_diff_eq!(got[k], want[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(f[0][1].horizontal_degrees(), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[0][1].vertical_degrees(), (4.0f64 / 3.0).atan().to_degrees(), epsilon = 1e-12);
    }

    #[test]
    fn vertical_stack_maps_to_ninety() {
        let f = spatial_feature([1.0, 1.0, 0.0], [1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(f.vertical_degrees(), 90.0, epsilon = 1e-12);
        assert_eq!((f.sin_h, f.cos_h), (0.0, 1.0));
        let g = spatial_feature([1.0, 1.0, 2.0], [1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(g.vertical_degrees(), -90.0, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_examples() {
        assert_eq!(yaw_to_quaternion(0.0).to_array(), [0.0, 0.0, 0.0, 1.0]);
        let q = yaw_to_quaternion(180.0);
        assert_abs_diff_eq!(q.qz, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.w, 0.0, epsilon = 1e-12);
        let q = yaw_to_quaternion(-90.0);
        assert_abs_diff_eq!(q.qz, -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(q.w, 0.70711, epsilon = 1e-5);
    }

    #[test]
    fn facing_yaw_reference_axis() {
        assert_abs_diff_eq!(facing_yaw([0.0, 0.0], [0.0, 1.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(facing_yaw([0.0, 0.0], [1.0, 0.0]).unwrap(), -90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(facing_yaw([0.0, 0.0], [0.0, -1.0]).unwrap(), 180.0, epsilon = 1e-12);
        assert_abs_diff_eq!(facing_yaw([0.0, 0.0], [-1.0, 0.0]).unwrap(), 90.0, epsilon = 1e-12);
    }

    fn point() -> impl Strategy<Value = Vec2> {
        (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| [x, y])
    }

    fn rigid(theta: f64, t: Vec2, p: Vec2) -> Vec2 {
        let (s, c) = theta.to_radians().sin_cos();
        [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1]]
    }

    proptest! {
        #[test]
        fn equivariance_under_quarter_turn(theta in 0.0..360.0f64) {
            let a = classify_direction(theta).unwrap();
            let b = classify_direction(normalize_degrees(theta + 90.0)).unwrap();
            prop_assert_eq!(b, a.clockwise_next());
        }

        #[test]
        fn rotation_and_distance_rigid_invariance(
            s in point(), f in point(), o in point(),
            theta in 0.0..360.0f64, t in point(),
        ) {
            prop_assume!(dist2d(s, f) > 1e-3 && dist2d(s, o) > 1e-3);
            let before = rotation_angle(s, f, o).unwrap();
            let after = rotation_angle(rigid(theta, t, s), rigid(theta, t, f), rigid(theta, t, o)).unwrap();
            prop_assert!(angular_difference(before, after) < 1e-9, "{before} vs {after}");
            let d0 = dist2d(s, o);
            let d1 = dist2d(rigid(theta, t, s), rigid(theta, t, o));
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn faced_point_is_front(s in point(), f in point()) {
            prop_assume!(s != f);
            prop_assert_eq!(rotation_angle(s, f, f).unwrap(), 0.0);
        }

        #[test]
        fn feature_antisymmetry(
            a in (-10.0..10.0f64, -10.0..10.0f64, -3.0..3.0f64),
            b in (-10.0..10.0f64, -10.0..10.0f64, -3.0..3.0f64),
        ) {
            let (a, b) = ([a.0, a.1, a.2], [b.0, b.1, b.2]);
            prop_assume!((a[0] - b[0]).hypot(a[1] - b[1]) > 1e-9);
            let ab = spatial_feature(a, b);
            let ba = spatial_feature(b, a);
            prop_assert!((ab.d - ba.d).abs() < 1e-12);
            prop_assert!(angular_difference(ab.horizontal_degrees(), ba.horizontal_degrees() + 180.0) < 1e-9);
            prop_assert!((ab.vertical_degrees() + ba.vertical_degrees()).abs() < 1e-9);
            prop_assert!((ab.sin_h.powi(2) + ab.cos_h.powi(2) - 1.0).abs() < 1e-9);
            prop_assert!((ab.sin_v.powi(2) + ab.cos_v.powi(2) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn unit_quaternion(yaw in -1000.0..1000.0f64) {
            prop_assert!((yaw_to_quaternion(yaw).norm() - 1.0).abs() < 1e-9);
        }
    }
}
