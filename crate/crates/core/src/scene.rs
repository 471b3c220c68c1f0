//! Annotated 3D scenes: oriented boxes, objects, and their 2D footprints.
//!
//! Scene documents are JSON:
//!
//! ```json
//! { "id": "scene_0",
//!   "objects": [ { "id": "table_8", "label": "table",
//!                  "obb": { "center": [0.0, 0.0, 0.4], "extents": [0.6, 0.4, 0.4], "yaw": 0.0 },
//!                  "attributes": { "color": "white" },
//!                  "affordances": [ "placing items on" ],
//!                  "relations": [ "close by chair_21" ] } ] }
//! ```
//!
//! `extents` are half-lengths in meters. `yaw` rotates the box's local x axis
//! counterclockwise about +z, in degrees. Object ids are the label (spaces
//! replaced by `_`) followed by `_<integer>`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

/// Labels that never qualify as a pivot by default.
pub const DEFAULT_EXCLUDED_PIVOT_LABELS: [&str; 3] = ["floor", "ceiling", "wall"];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed JSON: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scene: {0}")]
    Validation(String),
    #[error("no object qualifies")]
    EmptyResult,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Normalizes an angle in degrees into `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb3D {
    pub center: Vec3,
    pub extents: Vec3,
    pub yaw: f64,
}

impl Obb3D {
    pub fn new(center: Vec3, extents: Vec3, yaw: f64) -> Self {
        Obb3D {
            center,
            extents,
            yaw: normalize_degrees(yaw),
        }
    }

    /// The four footprint corners, counterclockwise, starting at local (+x, +y).
    pub fn corners2d(&self) -> [Vec2; 4] {
        let (s, c) = self.yaw.to_radians().sin_cos();
        let [ex, ey, _] = self.extents;
        let [cx, cy, _] = self.center;
        let local = [[ex, ey], [-ex, ey], [-ex, -ey], [ex, -ey]];
        local.map(|[lx, ly]| [cx + c * lx - s * ly, cy + s * lx + c * ly])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object3D {
    pub id: String,
    pub label: String,
    pub obb: Obb3D,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub affordances: Vec<String>,
    #[serde(default)]
    pub relations: Vec<String>,
}

impl Object3D {
    pub fn new(id: impl Into<String>, label: impl Into<String>, obb: Obb3D) -> Self {
        Object3D {
            id: id.into(),
            label: label.into(),
            obb,
            attributes: BTreeMap::new(),
            affordances: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_affordance(mut self, affordance: &str) -> Self {
        self.affordances.push(affordance.to_string());
        self
    }

    pub fn with_relation(mut self, relation: &str) -> Self {
        self.relations.push(relation.to_string());
        self
    }

    pub fn center2d(&self) -> Vec2 {
        [self.obb.center[0], self.obb.center[1]]
    }
}

/// Axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2D {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect2D {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        debug_assert!(min[0] <= max[0] && min[1] <= max[1]);
        Rect2D { min, max }
    }

    pub fn center(&self) -> Vec2 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Grows (or shrinks, for negative `margin`) the rectangle on every side.
    pub fn inflate(&self, margin: f64) -> Rect2D {
        Rect2D {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
        }
    }

    /// Midpoints of the bottom, top, left and right sides, in that order.
    pub fn side_midpoints(&self) -> [Vec2; 4] {
        let [cx, cy] = self.center();
        [
            [cx, self.min[1]],
            [cx, self.max[1]],
            [self.min[0], cy],
            [self.max[0], cy],
        ]
    }
}

/// Axis-aligned bounding rectangle of the object's projected box corners.
pub fn footprint2d(object: &Object3D) -> Rect2D {
    let corners = object.obb.corners2d();
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for c in corners {
        for k in 0..2 {
            min[k] = min[k].min(c[k]);
            max[k] = max[k].max(c[k]);
        }
    }
    Rect2D { min, max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub objects: Vec<Object3D>,
}

impl Scene {
    /// Builds a scene, normalizing yaws and checking ids and extents.
    ///
    /// A single object is accepted here; scene documents read through
    /// [`load_scene`] must carry at least two.
    pub fn new(id: impl Into<String>, objects: Vec<Object3D>) -> Result<Self, SceneError> {
        let mut scene = Scene {
            id: id.into(),
            objects,
        };
        for o in &mut scene.objects {
            o.obb.yaw = normalize_degrees(o.obb.yaw);
        }
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() {
            return Err(SceneError::Validation(format!(
                "scene `{}` has no objects",
                self.id
            )));
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                return Err(SceneError::Validation(format!("duplicate object id `{}`", o.id)));
            }
            if !id_matches_label(&o.id, &o.label) {
                return Err(SceneError::Validation(format!(
                    "object id `{}` does not follow `<label>_<integer>` for label `{}`",
                    o.id, o.label
                )));
            }
            let all_finite = o
                .obb
                .center
                .iter()
                .chain(o.obb.extents.iter())
                .chain(std::iter::once(&o.obb.yaw))
                .all(|v| v.is_finite());
            if !all_finite {
                return Err(SceneError::Validation(format!(
                    "object `{}` has a non-finite box parameter",
                    o.id
                )));
            }
            if o.obb.extents.iter().any(|&e| e <= 0.0) {
                return Err(SceneError::Validation(format!(
                    "object `{}` has a non-positive extent {:?}",
                    o.id, o.obb.extents
                )));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&Object3D> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.object(id).is_some()
    }

    /// Relation strings that mention an object id absent from the scene.
    /// Reported, never fatal.
    pub fn relation_warnings(&self) -> Vec<String> {
        let ids: HashSet<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        let mut out = Vec::new();
        for o in &self.objects {
            for rel in &o.relations {
                for token in id_like_tokens(rel) {
                    if !ids.contains(token) {
                        out.push(format!("`{}` relation `{rel}` references unknown id `{token}`", o.id));
                    }
                }
            }
        }
        out
    }

    /// Canonical pretty JSON; `load_scene` of this output reproduces the scene.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }
}

fn id_matches_label(id: &str, label: &str) -> bool {
    let Some((prefix, num)) = id.rsplit_once('_') else {
        return false;
    };
    !num.is_empty()
        && num.bytes().all(|b| b.is_ascii_digit())
        && !label.is_empty()
        && prefix == label.replace(' ', "_")
}

fn id_like_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| matches!(t.rsplit_once('_'), Some((p, n)) if !p.is_empty() && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())))
}

/// Parses and validates a scene document.
pub fn load_scene<R: Read>(mut source: R) -> Result<Scene, SceneError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(SceneError::Parse)?;
    let scene: Scene = serde_path_to_error::deserialize(value).map_err(|e| SceneError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if scene.objects.len() < 2 {
        return Err(SceneError::Validation(format!(
            "scene `{}` has {} object(s); at least 2 are required",
            scene.id,
            scene.objects.len()
        )));
    }
    Scene::new(scene.id, scene.objects)
}

pub fn load_scene_str(text: &str) -> Result<Scene, SceneError> {
    load_scene(text.as_bytes())
}

/// Mean of all footprint centers.
pub fn scene_center(scene: &Scene) -> Vec2 {
    let n = scene.objects.len() as f64;
    let (sx, sy) = scene.objects.iter().fold((0.0, 0.0), |(sx, sy), o| {
        let c = footprint2d(o).center();
        (sx + c[0], sy + c[1])
    });
    [sx / n, sy / n]
}

/// Ids of objects whose box center lies strictly below the scene's mean box
/// center height and whose label is not excluded. Scene order is kept.
pub fn eligible_pivots(
    scene: &Scene,
    excluded_labels: &BTreeSet<String>,
) -> Result<Vec<String>, SceneError> {
    let mean_z =
        scene.objects.iter().map(|o| o.obb.center[2]).sum::<f64>() / scene.objects.len() as f64;
    let ids: Vec<String> = scene
        .objects
        .iter()
        .filter(|o| o.obb.center[2] < mean_z && !excluded_labels.contains(&o.label))
        .map(|o| o.id.clone())
        .collect();
    if ids.is_empty() {
        Err(SceneError::EmptyResult)
    } else {
        Ok(ids)
    }
}

pub fn default_excluded_labels() -> BTreeSet<String> {
    DEFAULT_EXCLUDED_PIVOT_LABELS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obj(id: &str, center: Vec3, extents: Vec3, yaw: f64) -> Object3D {
        let label = id.rsplit_once('_').unwrap().0.replace('_', " ");
        Object3D::new(id, label, Obb3D::new(center, extents, yaw))
    }

    fn rect_eq(r: Rect2D, min: Vec2, max: Vec2) {
        for k in 0..2 {
            assert_abs_diff_eq!(r.min[k], min[k], epsilon = 1e-12);
            assert_abs_diff_eq!(r.max[k], max[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn footprint_axis_aligned() {
        let o = obj("box_1", [0.0, 0.0, 1.0], [1.0, 2.0, 0.5], 0.0);
        rect_eq(footprint2d(&o), [-1.0, -2.0], [1.0, 2.0]);
    }

    #[test]
    fn footprint_quarter_turn_swaps_extents() {
        let o = obj("box_1", [0.0, 0.0, 1.0], [1.0, 2.0, 0.5], 90.0);
        rect_eq(footprint2d(&o), [-2.0, -1.0], [2.0, 1.0]);
    }

    #[test]
    fn footprint_45_degrees() {
        let o = obj("box_1", [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 45.0);
        // corners (±1, ±1) rotated by 45° land on the axes at distance √2
        let s = 2f64.sqrt();
        rect_eq(footprint2d(&o), [-s, -s], [s, s]);
    }

    #[test]
    fn yaw_is_normalized() {
        let o = Obb3D::new([0.0; 3], [1.0; 3], -90.0);
        assert_eq!(o.yaw, 270.0);
        assert_eq!(normalize_degrees(-1e-20), 0.0);
        assert_eq!(normalize_degrees(720.0), 0.0);
    }

    #[test]
    fn center_of_two_and_one() {
        let s = Scene::new(
            "s",
            vec![
                obj("a_1", [0.0, 0.0, 0.0], [1.0; 3], 0.0),
                obj("b_2", [2.0, 2.0, 0.0], [1.0; 3], 30.0),
            ],
        )
        .unwrap();
        assert_eq!(scene_center(&s), [1.0, 1.0]);
        let s = Scene::new("s", vec![obj("a_1", [3.0, -1.0, 0.0], [1.0; 3], 10.0)]).unwrap();
        let c = scene_center(&s);
        assert_abs_diff_eq!(c[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], -1.0, epsilon = 1e-12);
    }

    fn z_scene() -> Scene {
        Scene::new(
            "s",
            vec![
                obj("rug_1", [0.0, 0.0, 0.2], [1.0; 3], 0.0),
                obj("chair_2", [1.0, 0.0, 0.5], [1.0; 3], 0.0),
                obj("lamp_3", [2.0, 0.0, 2.0], [1.0; 3], 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pivots_below_mean_height() {
        let ids = eligible_pivots(&z_scene(), &BTreeSet::new()).unwrap();
        assert_eq!(ids, vec!["rug_1", "chair_2"]);
    }

    #[test]
    fn pivots_respect_exclusions() {
        let excl: BTreeSet<String> = ["rug".to_string()].into();
        let ids = eligible_pivots(&z_scene(), &excl).unwrap();
        assert_eq!(ids, vec!["chair_2"]);
    }

    #[test]
    fn pivots_equal_heights_is_empty() {
        let s = Scene::new(
            "s",
            vec![
                obj("a_1", [0.0, 0.0, 0.5], [1.0; 3], 0.0),
                obj("b_2", [3.0, 0.0, 0.5], [1.0; 3], 0.0),
            ],
        )
        .unwrap();
        assert!(matches!(
            eligible_pivots(&s, &BTreeSet::new()),
            Err(SceneError::EmptyResult)
        ));
    }

    #[test]
    fn zero_extent_names_object() {
        let doc = r#"{"id":"s","objects":[
            {"id":"a_1","label":"a","obb":{"center":[0,0,0],"extents":[1,0.0,1],"yaw":0}},
            {"id":"b_2","label":"b","obb":{"center":[2,0,0],"extents":[1,1,1],"yaw":0}}]}"#;
        match load_scene_str(doc) {
            Err(SceneError::Validation(msg)) => assert!(msg.contains("a_1"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn error_classes_are_distinct() {
        assert!(matches!(load_scene_str("{not json"), Err(SceneError::Parse(_))));
        let missing = r#"{"id":"s","objects":[{"id":"a_1","label":"a"}]}"#;
        match load_scene_str(missing) {
            Err(SceneError::Schema { path, .. }) => assert_eq!(path, "objects[0]"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let mistyped = r#"{"id":"s","objects":[{"id":"a_1","label":"a","obb":{"center":[0,0,"x"],"extents":[1,1,1],"yaw":0}}]}"#;
        match load_scene_str(mistyped) {
            Err(SceneError::Schema { path, .. }) => assert_eq!(path, "objects[0].obb.center[2]"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let dup = r#"{"id":"s","objects":[
            {"id":"a_1","label":"a","obb":{"center":[0,0,0],"extents":[1,1,1],"yaw":0}},
            {"id":"a_1","label":"a","obb":{"center":[2,0,0],"extents":[1,1,1],"yaw":0}}]}"#;
        assert!(matches!(load_scene_str(dup), Err(SceneError::Validation(_))));
    }

    #[test]
    fn single_object_document_is_rejected() {
        let doc = r#"{"id":"s","objects":[{"id":"a_1","label":"a","obb":{"center":[0,0,0],"extents":[1,1,1],"yaw":0}}]}"#;
        assert!(matches!(load_scene_str(doc), Err(SceneError::Validation(_))));
    }

    #[test]
    fn id_pattern() {
        assert!(id_matches_label("table_8", "table"));
        assert!(id_matches_label("kitchen_cabinet_3", "kitchen cabinet"));
        assert!(!id_matches_label("table8", "table"));
        assert!(!id_matches_label("chair_8", "table"));
        assert!(!id_matches_label("table_x", "table"));
    }

    #[test]
    fn dangling_relations_are_reported() {
        let s = Scene::new(
            "s",
            vec![
                obj("a_1", [0.0, 0.0, 0.0], [1.0; 3], 0.0).with_relation("close by b_2"),
                obj("b_2", [3.0, 0.0, 0.0], [1.0; 3], 0.0).with_relation("standing on floor_9"),
            ],
        )
        .unwrap();
        let w = s.relation_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("floor_9"));
    }
}
