//! Situations, situated scene graphs and per-object situated descriptions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{
    classify_direction, dist2d, euclid_dist, facing_yaw, passby_objects, rotation_angle, yaw_to_quaternion,
    DirectionBin, GeometryError, PassbyConfig, Quaternion,
};
use crate::json::{round2, to_spaced_string};
use crate::scene::{
    default_excluded_labels, eligible_pivots, footprint2d, scene_center, Object3D, Scene, SceneError, Vec2, Vec3,
};

const MAX_SAMPLE_ATTEMPTS: usize = 8;

#[derive(Debug, Error)]
pub enum SituationError {
    #[error("scene `{0}` has no eligible pivot object")]
    NoEligiblePivot(String),
    #[error("scene `{0}` needs at least two objects")]
    TooFewObjects(String),
    #[error("degenerate geometry after {MAX_SAMPLE_ATTEMPTS} attempts in scene `{0}`")]
    DegenerateGeometry(String),
    #[error("unknown object id `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SituationConfig {
    pub excluded_pivot_labels: BTreeSet<String>,
    /// Outward offset of the standing point from the footprint side, meters.
    pub stand_offset: f64,
    pub graph: GraphConfig,
}

impl Default for SituationConfig {
    fn default() -> Self {
        SituationConfig {
            excluded_pivot_labels: default_excluded_labels(),
            stand_offset: 0.0,
            graph: GraphConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphConfig {
    /// Measure distances to full 3D box centers instead of their z = 0 projection.
    pub full_3d_distance: bool,
    pub passby: PassbyConfig,
}

/// An agent standing beside a pivot object, facing its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    pub description: String,
    /// Standing point; z is always 0.
    pub stand: Vec3,
    #[serde(rename = "quaternion", with = "quat_array")]
    pub orientation: Quaternion,
    pub pivot_id: String,
    pub referent_id: String,
    /// Facing direction, degrees counterclockwise from +y.
    pub yaw: f64,
    pub referent_direction: DirectionBin,
}

mod quat_array {
    use super::Quaternion;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &Quaternion, s: S) -> Result<S::Ok, S::Error> {
        q.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Quaternion, D::Error> {
        let [qx, qy, qz, w] = <[f64; 4]>::deserialize(d)?;
        Ok(Quaternion { qx, qy, qz, w })
    }
}

fn with_article(noun: &str) -> String {
    let article = match noun.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    };
    format!("{article} {noun}")
}

/// Situation sentence: pivot, referent and the referent's direction.
pub fn situation_text(pivot_label: &str, referent_label: &str, direction: DirectionBin) -> String {
    format!(
        "You are standing beside the {pivot_label}, and there is {} on the {}.",
        with_article(referent_label),
        direction.situation_word()
    )
}

/// Direction word at the end of a situation sentence, if any.
pub fn direction_in_situation_text(text: &str) -> Option<DirectionBin> {
    let last = text.trim_end_matches('.').rsplit(' ').next()?;
    DirectionBin::ALL
        .into_iter()
        .find(|d| d.situation_word() == last)
}

impl Situation {
    /// Situation standing at `stand`, facing the pivot's footprint center.
    pub fn new(scene: &Scene, pivot_id: &str, stand: Vec2, referent_id: &str) -> Result<Self, SituationError> {
        let pivot = scene
            .object(pivot_id)
            .ok_or_else(|| SituationError::UnknownId(pivot_id.to_string()))?;
        let referent = scene
            .object(referent_id)
            .ok_or_else(|| SituationError::UnknownId(referent_id.to_string()))?;
        if pivot_id == referent_id {
            return Err(GeometryError::Degenerate("pivot and referent coincide".into()).into());
        }
        let facing = footprint2d(pivot).center();
        let yaw = facing_yaw(stand, facing)?;
        let angle = rotation_angle(stand, facing, referent.center2d())?;
        let referent_direction = classify_direction(angle)?;
        Ok(Situation {
            description: situation_text(&pivot.label, &referent.label, referent_direction),
            stand: [stand[0], stand[1], 0.0],
            orientation: yaw_to_quaternion(yaw),
            pivot_id: pivot_id.to_string(),
            referent_id: referent_id.to_string(),
            yaw,
            referent_direction,
        })
    }

    pub fn stand2d(&self) -> Vec2 {
        [self.stand[0], self.stand[1]]
    }

    /// Stable short digest of the serialized situation.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("situation serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Random stream for one situation, independent of processing order.
pub fn situation_rng(master_seed: u64, scene_id: &str, stream: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((scene_id.len() as u64).to_le_bytes());
    h.update(scene_id.as_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Side midpoints of the object's footprint, nearest to `center` first.
pub fn ranked_side_midpoints(object: &Object3D, center: Vec2) -> [Vec2; 4] {
    let mut mids = footprint2d(object).side_midpoints();
    mids.sort_by(|a, b| dist2d(*a, center).total_cmp(&dist2d(*b, center)));
    mids
}

fn offset_outward(object: &Object3D, mid: Vec2, offset: f64) -> Vec2 {
    if offset == 0.0 {
        return mid;
    }
    let fp = footprint2d(object);
    let c = fp.center();
    if mid[1] == fp.min[1] && mid[0] == c[0] {
        [mid[0], mid[1] - offset]
    } else if mid[1] == fp.max[1] && mid[0] == c[0] {
        [mid[0], mid[1] + offset]
    } else if mid[0] == fp.min[0] {
        [mid[0] - offset, mid[1]]
    } else {
        [mid[0] + offset, mid[1]]
    }
}

/// Draws a situation: a low pivot, a standing point on one of the two
/// footprint sides nearest the scene center, and a referent object.
pub fn sample_situation<R: Rng + ?Sized>(
    scene: &Scene,
    rng: &mut R,
    config: &SituationConfig,
) -> Result<Situation, SituationError> {
    if scene.objects.len() < 2 {
        return Err(SituationError::TooFewObjects(scene.id.clone()));
    }
    let pivots = match eligible_pivots(scene, &config.excluded_pivot_labels) {
        Ok(p) => p,
        Err(SceneError::EmptyResult) => return Err(SituationError::NoEligiblePivot(scene.id.clone())),
        Err(e) => unreachable!("eligible_pivots only fails with EmptyResult: {e}"),
    };
    let center = scene_center(scene);
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let pivot_id = pivots.choose(rng).expect("non-empty");
        let pivot = scene.object(pivot_id).expect("pivot from scene");
        let mids = ranked_side_midpoints(pivot, center);
        let mid = mids[rng.random_range(0..2)];
        let stand = offset_outward(pivot, mid, config.stand_offset);
        let others: Vec<&Object3D> = scene.objects.iter().filter(|o| o.id != *pivot_id).collect();
        let referent = others.choose(rng).expect("at least one other object");
        match Situation::new(scene, pivot_id, stand, &referent.id) {
            Ok(s) => return Ok(s),
            Err(SituationError::Geometry(GeometryError::Degenerate(_))) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SituationError::DegenerateGeometry(scene.id.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituatedObjectRecord {
    pub object_id: String,
    pub label: String,
    pub distance: f64,
    pub angle: f64,
    pub direction: DirectionBin,
    pub passby: Vec<String>,
    pub attributes: BTreeMap<String, String>,
    pub affordances: Vec<String>,
    pub relations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SituatedSceneGraph {
    pub scene_id: String,
    pub situation: Situation,
    /// Label of the pivot, which the agent faces and so counts as Front.
    pub pivot_label: String,
    /// Every direction is present; records sorted by ascending distance.
    pub buckets: BTreeMap<DirectionBin, Vec<SituatedObjectRecord>>,
}

impl SituatedSceneGraph {
    pub fn bucket(&self, direction: DirectionBin) -> &[SituatedObjectRecord] {
        self.buckets.get(&direction).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn records(&self) -> impl Iterator<Item = &SituatedObjectRecord> {
        DirectionBin::ALL.into_iter().flat_map(move |d| self.bucket(d).iter())
    }

    pub fn record(&self, object_id: &str) -> Option<&SituatedObjectRecord> {
        self.records().find(|r| r.object_id == object_id)
    }

    /// Number of objects with `label` in the `direction` bucket, the pivot
    /// included in Front.
    pub fn count_label(&self, direction: DirectionBin, label: &str) -> usize {
        let pivot = usize::from(direction == DirectionBin::Front && self.pivot_label == label);
        pivot + self.bucket(direction).iter().filter(|r| r.label == label).count()
    }

    /// Distinct labels of all objects, the pivot included.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.records().map(|r| r.label.clone()).collect();
        labels.push(self.pivot_label.clone());
        labels.sort();
        labels.dedup();
        labels
    }

    /// Whether `id` names the pivot or any graph object.
    pub fn knows_id(&self, id: &str) -> bool {
        id == self.situation.pivot_id || self.record(id).is_some()
    }

    pub fn to_json(&self) -> String {
        graph_to_json(self)
    }
}

fn angle_or_front(stand: Vec2, facing: Vec2, target: Vec2) -> Result<f64, GeometryError> {
    if stand == target {
        // object centered on the standing point: treated as straight ahead
        return Ok(0.0);
    }
    rotation_angle(stand, facing, target)
}

fn make_record(
    object: &Object3D,
    stand: Vec2,
    facing: Vec2,
    passby: Vec<String>,
    config: &GraphConfig,
) -> Result<SituatedObjectRecord, GeometryError> {
    let angle = angle_or_front(stand, facing, object.center2d())?;
    let [x, y, z] = object.obb.center;
    let distance = if config.full_3d_distance {
        euclid_dist([stand[0], stand[1], 0.0], [x, y, z])
    } else {
        euclid_dist([stand[0], stand[1], 0.0], [x, y, 0.0])
    };
    Ok(SituatedObjectRecord {
        object_id: object.id.clone(),
        label: object.label.clone(),
        distance,
        angle,
        direction: classify_direction(angle)?,
        passby,
        attributes: object.attributes.clone(),
        affordances: object.affordances.clone(),
        relations: object.relations.clone(),
    })
}

fn sort_buckets(buckets: &mut BTreeMap<DirectionBin, Vec<SituatedObjectRecord>>) {
    for records in buckets.values_mut() {
        records.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.object_id.cmp(&b.object_id)));
    }
}

fn empty_buckets() -> BTreeMap<DirectionBin, Vec<SituatedObjectRecord>> {
    DirectionBin::ALL.into_iter().map(|d| (d, Vec::new())).collect()
}

pub fn build_situated_graph(scene: &Scene, situation: &Situation) -> Result<SituatedSceneGraph, SituationError> {
    build_situated_graph_with(scene, situation, &GraphConfig::default())
}

pub fn build_situated_graph_with(
    scene: &Scene,
    situation: &Situation,
    config: &GraphConfig,
) -> Result<SituatedSceneGraph, SituationError> {
    let pivot = scene
        .object(&situation.pivot_id)
        .ok_or_else(|| SituationError::UnknownId(situation.pivot_id.clone()))?;
    if !scene.contains_id(&situation.referent_id) {
        return Err(SituationError::UnknownId(situation.referent_id.clone()));
    }
    let stand = situation.stand2d();
    let facing = footprint2d(pivot).center();
    let excluded: BTreeSet<String> = [pivot.id.clone()].into();
    let mut buckets = empty_buckets();
    for object in scene.objects.iter().filter(|o| o.id != pivot.id) {
        let passby = passby_objects(scene, stand, &object.id, &excluded, &config.passby)?;
        let record = make_record(object, stand, facing, passby, config)?;
        buckets.get_mut(&record.direction).expect("all bins present").push(record);
    }
    sort_buckets(&mut buckets);
    Ok(SituatedSceneGraph {
        scene_id: scene.id.clone(),
        situation: situation.clone(),
        pivot_label: pivot.label.clone(),
        buckets,
    })
}

/// Fixed key order of a serialized record.
#[derive(Serialize)]
struct RecordJson<'a> {
    distance: f64,
    passby: &'a [String],
    affordances: &'a [String],
    attributes: &'a BTreeMap<String, String>,
    angle: f64,
    relations: &'a [String],
}

struct BucketJson<'a>(&'a [SituatedObjectRecord]);

impl Serialize for BucketJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for r in self.0 {
            map.serialize_entry(
                &r.object_id,
                &RecordJson {
                    distance: round2(r.distance),
                    passby: &r.passby,
                    affordances: &r.affordances,
                    attributes: &r.attributes,
                    angle: round2(r.angle),
                    relations: &r.relations,
                },
            )?;
        }
        map.end()
    }
}

/// Direction keys in emission order.
pub const GRAPH_KEY_ORDER: [DirectionBin; 4] =
    [DirectionBin::Left, DirectionBin::Right, DirectionBin::Front, DirectionBin::Back];

struct GraphJson<'a>(&'a SituatedSceneGraph);

impl Serialize for GraphJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(4))?;
        for d in GRAPH_KEY_ORDER {
            map.serialize_entry(d.json_key(), &BucketJson(self.0.bucket(d)))?;
        }
        map.end()
    }
}

/// Deterministic scene-graph JSON.
///
/// Direction keys come in the order Left, Right, Front, Backwards; objects
/// within a direction are keyed by id, nearest first, with the fields
/// `distance`, `passby`, `affordances`, `attributes`, `angle`, `relations`.
/// Distances and angles are rounded to two decimals.
pub fn graph_to_json(graph: &SituatedSceneGraph) -> String {
    to_spaced_string(&GraphJson(graph))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDescription {
    pub object_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionConfig {
    pub max_per_direction: usize,
    pub graph: GraphConfig,
}

impl Default for DescriptionConfig {
    fn default() -> Self {
        DescriptionConfig {
            max_per_direction: 5,
            graph: GraphConfig::default(),
        }
    }
}

const ATTRIBUTE_ORDER: [&str; 5] = ["size", "shape", "color", "material", "state"];

/// Object label preceded by its attribute values, e.g. "small white chair".
pub fn describe_with_attributes(label: &str, attributes: &BTreeMap<String, String>) -> String {
    let mut words: Vec<&str> = ATTRIBUTE_ORDER
        .iter()
        .filter_map(|k| attributes.get(*k).map(String::as_str))
        .collect();
    words.extend(
        attributes
            .iter()
            .filter(|(k, _)| !ATTRIBUTE_ORDER.contains(&k.as_str()))
            .map(|(_, v)| v.as_str()),
    );
    words.retain(|w| !w.is_empty());
    words.push(label);
    words.join(" ")
}

/// Surroundings of `object_id` as seen from the side of its footprint
/// nearest the scene center, facing the object.
pub fn situated_description(
    scene: &Scene,
    object_id: &str,
    config: &DescriptionConfig,
) -> Result<ObjectDescription, SituationError> {
    let object = scene
        .object(object_id)
        .ok_or_else(|| SituationError::UnknownId(object_id.to_string()))?;
    let stand = ranked_side_midpoints(object, scene_center(scene))[0];
    let facing = footprint2d(object).center();
    let mut buckets = empty_buckets();
    for other in scene.objects.iter().filter(|o| o.id != object.id) {
        let record = make_record(other, stand, facing, Vec::new(), &config.graph)?;
        buckets.get_mut(&record.direction).expect("all bins present").push(record);
    }
    sort_buckets(&mut buckets);

    let name = describe_with_attributes(&object.label, &object.attributes);
    let section = |d: DirectionBin| {
        let items: Vec<String> = buckets[&d]
            .iter()
            .take(config.max_per_direction)
            .map(|r| with_article(&describe_with_attributes(&r.label, &r.attributes)))
            .collect();
        match items.len() {
            0 => "there are no objects".to_string(),
            1 => format!("there is {}", items[0]),
            _ => format!("there are {}", items.join(", ")),
        }
    };
    let text = format!(
        "Stand besides the {name} and facing the center of the {name}, in front, {}; on the right, {}; behind, {}; and on the left, {}.",
        section(DirectionBin::Front),
        section(DirectionBin::Right),
        section(DirectionBin::Back),
        section(DirectionBin::Left),
    );
    Ok(ObjectDescription {
        object_id: object.id.clone(),
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Obb3D;
    use crate::synth::fig4_scene;
    use approx::assert_abs_diff_eq;

    fn boxed(id: &str, center: Vec3, ext: Vec3) -> Object3D {
        let label = id.rsplit_once('_').unwrap().0.replace('_', " ");
        Object3D::new(id, label, Obb3D::new(center, ext, 0.0))
    }

    #[test]
    fn side_midpoint_ranking() {
        // footprint [1,3]x[1,2], scene center at the origin
        let o = boxed("box_1", [2.0, 1.5, 0.0], [1.0, 0.5, 0.5]);
        let mids = ranked_side_midpoints(&o, [0.0, 0.0]);
        // distances: (1,1.5) √3.25, (2,1) √5, (2,2) √8, (3,1.5) √11.25
        assert_eq!(mids, [[1.0, 1.5], [2.0, 1.0], [2.0, 2.0], [3.0, 1.5]]);
    }

    #[test]
    fn quarter_turn_orientation() {
        let scene = Scene::new(
            "s",
            vec![
                boxed("box_1", [2.0, 1.5, 0.0], [1.0, 0.5, 0.5]),
                boxed("lamp_2", [5.0, 5.0, 1.0], [0.2, 0.2, 0.5]),
            ],
        )
        .unwrap();
        let s = Situation::new(&scene, "box_1", [1.0, 1.5], "lamp_2").unwrap();
        assert_abs_diff_eq!(s.yaw, -90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.orientation.qz, -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s.orientation.w, 0.70711, epsilon = 1e-5);
        assert_eq!(s.stand[2], 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let scene = fig4_scene();
        let cfg = SituationConfig::default();
        let a = sample_situation(&scene, &mut ChaCha8Rng::seed_from_u64(42), &cfg).unwrap();
        let b = sample_situation(&scene, &mut ChaCha8Rng::seed_from_u64(42), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn sampled_stand_is_on_a_nearest_side() {
        let scene = fig4_scene();
        let center = scene_center(&scene);
        let cfg = SituationConfig::default();
        for i in 0..64 {
            let s = sample_situation(&scene, &mut situation_rng(3, &scene.id, "t", i), &cfg).unwrap();
            let pivot = scene.object(&s.pivot_id).unwrap();
            let mids = ranked_side_midpoints(pivot, center);
            assert!(mids[..2].contains(&s.stand2d()), "{:?}", s.stand);
            assert_ne!(s.pivot_id, s.referent_id);
            assert_eq!(direction_in_situation_text(&s.description), Some(s.referent_direction));
        }
    }

    #[test]
    fn no_pivot_is_an_error() {
        let scene = Scene::new(
            "flat",
            vec![
                boxed("a_1", [0.0, 0.0, 0.5], [0.5; 3]),
                boxed("b_2", [3.0, 0.0, 0.5], [0.5; 3]),
            ],
        )
        .unwrap();
        let r = sample_situation(&scene, &mut ChaCha8Rng::seed_from_u64(0), &SituationConfig::default());
        assert!(matches!(r, Err(SituationError::NoEligiblePivot(_))));
    }

    #[test]
    fn stand_offset_moves_outward() {
        let o = boxed("box_1", [2.0, 1.5, 0.0], [1.0, 0.5, 0.5]);
        assert_eq!(offset_outward(&o, [1.0, 1.5], 0.25), [0.75, 1.5]);
        assert_eq!(offset_outward(&o, [2.0, 1.0], 0.25), [2.0, 0.75]);
        assert_eq!(offset_outward(&o, [2.0, 2.0], 0.25), [2.0, 2.25]);
        assert_eq!(offset_outward(&o, [3.0, 1.5], 0.25), [3.25, 1.5]);
    }

    #[test]
    fn object_on_facing_ray_is_front() {
        let scene = Scene::new(
            "s",
            vec![
                boxed("sofa_1", [0.0, 0.0, 0.4], [1.0, 0.5, 0.4]),
                boxed("tv_2", [0.0, 4.0, 1.0], [0.5, 0.1, 0.3]),
            ],
        )
        .unwrap();
        let s = Situation::new(&scene, "sofa_1", [0.0, -0.5], "tv_2").unwrap();
        let g = build_situated_graph(&scene, &s).unwrap();
        let r = g.record("tv_2").unwrap();
        assert_eq!(r.angle, 0.0);
        assert_eq!(r.direction, DirectionBin::Front);
        assert_eq!(g.bucket(DirectionBin::Front).len(), 1);
    }

    #[test]
    fn json_empty_buckets_present() {
        let scene = Scene::new(
            "s",
            vec![
                boxed("sofa_1", [0.0, 0.0, 0.4], [1.0, 0.5, 0.4]),
                boxed("tv_2", [0.0, 4.0, 1.0], [0.5, 0.1, 0.3]),
            ],
        )
        .unwrap();
        let s = Situation::new(&scene, "sofa_1", [0.0, -0.5], "tv_2").unwrap();
        let g = build_situated_graph(&scene, &s).unwrap();
        let json = graph_to_json(&g);
        assert!(json.starts_with(r#"{"Left": {}, "Right": {}, "Front": {"tv_2": {"distance": 4.5, "#), "{json}");
        assert!(json.ends_with(r#""Backwards": {}}"#), "{json}");
        assert_eq!(json, graph_to_json(&g));
    }

    #[test]
    fn json_record_fragment() {
        let scene = fig4_scene();
        let s = Situation::new(&scene, "sofa_1", [0.0, -0.45], "tv_2").unwrap();
        let mut g = build_situated_graph(&scene, &s).unwrap();
        let record = SituatedObjectRecord {
            object_id: "table_8".into(),
            label: "table".into(),
            distance: 2.6,
            angle: 257.48,
            direction: DirectionBin::Left,
            passby: vec!["chair_21".into()],
            attributes: [("color".to_string(), "red".to_string())].into(),
            affordances: vec!["placing items on".into()],
            relations: vec!["close by chair_36".into()],
        };
        g.buckets.insert(DirectionBin::Left, vec![record]);
        let json = graph_to_json(&g);
        assert!(
            json.starts_with(
                r#"{"Left": {"table_8": {"distance": 2.6, "passby": ["chair_21"], "affordances": ["placing items on"], "attributes": {"color": "red"}, "angle": 257.48, "relations": ["close by chair_36"]}}, "Right": "#
            ),
            "{json}"
        );
    }

    #[test]
    fn description_lists_at_most_five_nearest() {
        // seven chairs straight ahead beyond the target, at increasing distance
        let mut objects = vec![boxed("desk_1", [0.0, 0.0, 0.4], [0.5, 0.5, 0.4])];
        for k in 0..7 {
            objects.push(
                boxed(&format!("chair_{}", k + 2), [0.0, 2.0 + k as f64, 0.4], [0.2, 0.2, 0.4])
                    .with_attribute("color", &format!("c{k}")),
            );
        }
        let scene = Scene::new("s", objects).unwrap();
        let d = situated_description(&scene, "desk_1", &DescriptionConfig::default()).unwrap();
        // scene center (0, 4.375) sits beyond the desk's top side
        assert!(d.text.starts_with("Stand besides the desk and facing the center of the desk, in front, there are no objects; "), "{}", d.text);
        // stand at (0, 0.5) facing (0, 0): the chairs are behind, nearest = c0
        let behind = d.text.split("behind, ").nth(1).unwrap().split(';').next().unwrap();
        assert_eq!(behind, "there are a c0 chair, a c1 chair, a c2 chair, a c3 chair, a c4 chair");
        assert!(!d.text.contains("c5 chair") && !d.text.contains("c6 chair"));
    }

    #[test]
    fn description_of_isolated_object() {
        let scene = Scene::new("s", vec![boxed("chair_1", [0.0, 0.0, 0.4], [0.3; 3]).with_attribute("color", "white")]).unwrap();
        let d = situated_description(&scene, "chair_1", &DescriptionConfig::default()).unwrap();
        assert_eq!(
            d.text,
            "Stand besides the white chair and facing the center of the white chair, in front, there are no objects; \
             on the right, there are no objects; behind, there are no objects; and on the left, there are no objects."
        );
        assert!(matches!(
            situated_description(&scene, "nope_1", &DescriptionConfig::default()),
            Err(SituationError::UnknownId(_))
        ));
    }

    #[test]
    fn attribute_phrase_order() {
        let attrs: BTreeMap<String, String> = [("color", "white"), ("size", "small"), ("texture", "soft")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        assert_eq!(describe_with_attributes("chair", &attrs), "small white soft chair");
    }

    #[test]
    fn rng_streams_differ() {
        let a: u64 = situation_rng(1, "s", "t", 0).random();
        let b: u64 = situation_rng(1, "s", "t", 1).random();
        let c: u64 = situation_rng(1, "s", "t", 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
