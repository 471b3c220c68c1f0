//! Conversion of 3RScan annotation dumps into the scene schema.
//!
//! Inputs:
//!
//! * `semseg.v2.json`: `{"scan_id", "segGroups": [{"objectId", "label",
//!   "obb": {"centroid", "axesLengths", "normalizedAxes"}}]}`. The axes are
//!   three unit vectors (row-major, 9 numbers) with full side lengths.
//! * optional `objects.json`: `{"scans": [{"scan", "objects": [{"id",
//!   "attributes": {key: [values]}, "affordances": [..]}]}]}`.
//! * optional `relationships.json`: `{"scans": [{"scan", "relationships":
//!   [[subject, object, predicate_id, "predicate"]]}]}`.
//!
//! The axis closest to vertical becomes the box height; the first remaining
//! axis defines the yaw. Object ids become `<label>_<objectId>` with spaces
//! in the label replaced by underscores.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use crate::scene::{Obb3D, Object3D, Scene, SceneError};

#[derive(Deserialize)]
struct SemSeg {
    #[serde(alias = "sceneId")]
    scan_id: Option<String>,
    #[serde(rename = "segGroups")]
    seg_groups: Vec<SegGroup>,
}

#[derive(Deserialize)]
struct SegGroup {
    #[serde(rename = "objectId")]
    object_id: u64,
    label: String,
    obb: RawObb,
}

#[derive(Deserialize)]
struct RawObb {
    centroid: [f64; 3],
    #[serde(rename = "axesLengths")]
    axes_lengths: [f64; 3],
    #[serde(rename = "normalizedAxes")]
    normalized_axes: [f64; 9],
}

fn schema_err(path: &str, e: impl std::fmt::Display) -> SceneError {
    SceneError::Schema {
        path: path.to_string(),
        message: e.to_string(),
    }
}

fn convert_obb(raw: &RawObb) -> Obb3D {
    let axes: [[f64; 3]; 3] = [
        [raw.normalized_axes[0], raw.normalized_axes[1], raw.normalized_axes[2]],
        [raw.normalized_axes[3], raw.normalized_axes[4], raw.normalized_axes[5]],
        [raw.normalized_axes[6], raw.normalized_axes[7], raw.normalized_axes[8]],
    ];
    let vertical = (0..3)
        .max_by(|&a, &b| axes[a][2].abs().total_cmp(&axes[b][2].abs()))
        .expect("three axes");
    let horizontal: Vec<usize> = (0..3).filter(|&i| i != vertical).collect();
    let (ix, iy) = (horizontal[0], horizontal[1]);
    let yaw = axes[ix][1].atan2(axes[ix][0]).to_degrees();
    let half = |i: usize| (raw.axes_lengths[i] / 2.0).max(1e-3);
    Obb3D::new(raw.centroid, [half(ix), half(iy), half(vertical)], yaw)
}

fn scan_entry<'a>(doc: &'a Value, scan: &str) -> Option<&'a Value> {
    doc.get("scans")?
        .as_array()?
        .iter()
        .find(|s| s.get("scan").and_then(Value::as_str) == Some(scan))
}

fn value_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(|x| x.as_str().map(str::to_string)).collect();
            (!parts.is_empty()).then(|| parts.join(" "))
        }
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn object_key(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Builds a scene from 3RScan documents. `scene_id` overrides the scan id.
pub fn ingest_3rscan(
    semseg: &str,
    objects: Option<&str>,
    relationships: Option<&str>,
    scene_id: Option<&str>,
) -> Result<Scene, SceneError> {
    let de = &mut serde_json::Deserializer::from_str(semseg);
    let seg: SemSeg = serde_path_to_error::deserialize(de).map_err(|e| schema_err(&e.path().to_string(), e.inner()))?;
    let scan = scene_id
        .map(str::to_string)
        .or(seg.scan_id.clone())
        .ok_or_else(|| schema_err("scan_id", "missing scan id; pass one explicitly"))?;
    // annotation files are keyed by the original scan id
    let lookup = seg.scan_id.clone().unwrap_or_else(|| scan.clone());

    let mut by_key: BTreeMap<u64, usize> = BTreeMap::new();
    let mut out: Vec<Object3D> = Vec::with_capacity(seg.seg_groups.len());
    for g in &seg.seg_groups {
        if by_key.contains_key(&g.object_id) {
            continue;
        }
        let label = g.label.trim().to_string();
        let id = format!("{}_{}", label.replace(' ', "_"), g.object_id);
        by_key.insert(g.object_id, out.len());
        out.push(Object3D::new(id, label, convert_obb(&g.obb)));
    }

    if let Some(text) = objects {
        let doc: Value = serde_json::from_str(text).map_err(SceneError::Parse)?;
        if let Some(entry) = scan_entry(&doc, &lookup) {
            for o in entry.get("objects").and_then(Value::as_array).into_iter().flatten() {
                let Some(idx) = o.get("id").and_then(object_key).and_then(|k| by_key.get(&k)) else {
                    continue;
                };
                let obj = &mut out[*idx];
                if let Some(attrs) = o.get("attributes").and_then(Value::as_object) {
                    for (k, v) in attrs {
                        if let Some(t) = value_text(v) {
                            obj.attributes.insert(k.clone(), t);
                        }
                    }
                }
                for a in o.get("affordances").and_then(Value::as_array).into_iter().flatten() {
                    if let Some(a) = a.as_str() {
                        obj.affordances.push(a.to_string());
                    }
                }
            }
        }
    }

    if let Some(text) = relationships {
        let doc: Value = serde_json::from_str(text).map_err(SceneError::Parse)?;
        if let Some(entry) = scan_entry(&doc, &lookup) {
            for rel in entry.get("relationships").and_then(Value::as_array).into_iter().flatten() {
                let Some(parts) = rel.as_array() else { continue };
                if parts.len() < 4 {
                    continue;
                }
                let (Some(s), Some(o), Some(name)) = (object_key(&parts[0]), object_key(&parts[1]), parts[3].as_str())
                else {
                    continue;
                };
                if let (Some(&si), Some(&oi)) = (by_key.get(&s), by_key.get(&o)) {
                    let target = out[oi].id.clone();
                    out[si].relations.push(format!("{name} {target}"));
                }
            }
        }
    }

    let scene = Scene::new(scan, out)?;
    if scene.objects.len() < 2 {
        return Err(SceneError::Validation(format!(
            "scan `{}` has {} object(s); at least 2 are required",
            scene.id,
            scene.objects.len()
        )));
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SEMSEG: &str = r#"{
      "scan_id": "scan-a",
      "segGroups": [
        {"id": 1, "objectId": 1, "label": "chair", "segments": [1, 2],
         "obb": {"centroid": [1.0, 2.0, 0.4], "axesLengths": [0.6, 0.5, 0.8],
                 "normalizedAxes": [0, 1, 0, -1, 0, 0, 0, 0, 1]}},
        {"id": 2, "objectId": 2, "label": "coffee table",
         "obb": {"centroid": [0.0, 0.0, 0.3], "axesLengths": [0.6, 1.2, 0.4],
                 "normalizedAxes": [0, 0, 1, 1, 0, 0, 0, 1, 0]}}
      ]
    }"#;

    #[test]
    fn converts_boxes_and_ids() {
        let s = ingest_3rscan(SEMSEG, None, None, None).unwrap();
        assert_eq!(s.id, "scan-a");
        let chair = s.object("chair_1").unwrap();
        assert_relative_eq!(chair.obb.yaw, 90.0, epsilon = 1e-12);
        assert_eq!(chair.obb.extents, [0.3, 0.25, 0.4]);
        let table = s.object("coffee_table_2").unwrap();
        assert_eq!(table.label, "coffee table");
        assert_eq!(table.obb.extents, [0.6, 0.2, 0.3]);
        assert_relative_eq!(table.obb.yaw, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn merges_attributes_and_relations() {
        let objects = r#"{"scans": [{"scan": "scan-a", "objects": [
            {"id": "1", "label": "chair", "attributes": {"color": ["black"], "material": ["wooden", "metal"]},
             "affordances": ["sitting on"]}]}]}"#;
        let rels = r#"{"scans": [{"scan": "scan-a", "relationships": [[1, 2, 3, "close by"], [9, 2, 3, "left"]]}]}"#;
        let s = ingest_3rscan(SEMSEG, Some(objects), Some(rels), Some("renamed")).unwrap();
        assert_eq!(s.id, "renamed");
        let chair = s.object("chair_1").unwrap();
        assert_eq!(chair.attributes["color"], "black");
        assert_eq!(chair.attributes["material"], "wooden metal");
        assert_eq!(chair.affordances, vec!["sitting on".to_string()]);
        assert_eq!(chair.relations, vec!["close by coffee_table_2".to_string()]);
        assert!(s.relation_warnings().is_empty());
    }

    #[test]
    fn schema_errors_name_the_path() {
        let bad = r#"{"scan_id": "x", "segGroups": [{"objectId": 1, "label": "a", "obb": {"centroid": [0, 0]}}]}"#;
        match ingest_3rscan(bad, None, None, None) {
            Err(SceneError::Schema { path, .. }) => assert!(path.starts_with("segGroups[0].obb"), "{path}"),
            other => panic!("{other:?}"),
        }
    }
}
