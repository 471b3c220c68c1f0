//! Hand-built and randomly generated scenes for tests, demos and smoke runs.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::scene::{footprint2d, Obb3D, Object3D, Scene};

/// Living-room layout: sofa, TV, table, kitchen cabinet, window and wall.
///
/// Standing at `(0, -0.45)` beside the sofa and facing its center, the TV is
/// straight ahead, the table and kitchen cabinet are to the right (the table
/// lies on the path to the cabinet), the window is to the left and the wall
/// is behind.
pub fn fig4_scene() -> Scene {
    let objects = vec![
        Object3D::new("sofa_1", "sofa", Obb3D::new([0.0, 0.0, 0.4], [1.0, 0.45, 0.4], 0.0))
            .with_attribute("color", "gray")
            .with_affordance("sitting on")
            .with_affordance("lying on")
            .with_relation("facing tv_2"),
        Object3D::new("tv_2", "tv", Obb3D::new([0.0, 3.0, 1.0], [0.6, 0.1, 0.3], 0.0))
            .with_attribute("color", "black")
            .with_affordance("watching")
            .with_relation("facing sofa_1"),
        Object3D::new("table_8", "table", Obb3D::new([2.0, -0.5, 0.4], [0.5, 0.4, 0.4], 0.0))
            .with_attribute("color", "white")
            .with_attribute("shape", "rectangular")
            .with_affordance("placing items on")
            .with_relation("close by kitchen_cabinet_5"),
        Object3D::new(
            "kitchen_cabinet_5",
            "kitchen cabinet",
            Obb3D::new([4.0, -0.5, 0.9], [0.3, 0.6, 0.9], 0.0),
        )
        .with_attribute("color", "brown")
        .with_affordance("storing in"),
        Object3D::new("window_3", "window", Obb3D::new([-3.5, 1.0, 1.5], [0.05, 0.8, 0.6], 0.0))
            .with_affordance("opening"),
        Object3D::new("wall_4", "wall", Obb3D::new([0.0, -3.0, 1.5], [4.0, 0.1, 1.5], 0.0)),
    ];
    Scene::new("fig4_living_room", objects).expect("fixture is valid")
}

struct Kind {
    label: &'static str,
    half: [f64; 3],
    z: f64,
    affordances: &'static [&'static str],
}

const CATALOG: &[Kind] = &[
    Kind { label: "chair", half: [0.25, 0.25, 0.45], z: 0.45, affordances: &["sitting on"] },
    Kind { label: "table", half: [0.6, 0.4, 0.38], z: 0.38, affordances: &["placing items on"] },
    Kind { label: "sofa", half: [1.0, 0.45, 0.4], z: 0.4, affordances: &["sitting on", "lying on"] },
    Kind { label: "bed", half: [1.0, 0.8, 0.3], z: 0.3, affordances: &["lying on", "sleeping on"] },
    Kind { label: "cabinet", half: [0.5, 0.3, 0.8], z: 0.8, affordances: &["storing in"] },
    Kind { label: "stool", half: [0.2, 0.2, 0.3], z: 0.3, affordances: &["sitting on"] },
    Kind { label: "desk", half: [0.7, 0.35, 0.38], z: 0.38, affordances: &["placing items on", "working at"] },
    Kind { label: "trash bin", half: [0.15, 0.15, 0.25], z: 0.25, affordances: &["throwing away trash"] },
    Kind { label: "plant", half: [0.2, 0.2, 0.4], z: 0.4, affordances: &["watering"] },
    Kind { label: "nightstand", half: [0.25, 0.25, 0.3], z: 0.3, affordances: &["placing items on"] },
    Kind { label: "lamp", half: [0.15, 0.15, 0.4], z: 1.5, affordances: &["turning on", "lighting"] },
    Kind { label: "tv", half: [0.6, 0.08, 0.35], z: 1.1, affordances: &["watching"] },
    Kind { label: "picture", half: [0.4, 0.03, 0.3], z: 1.6, affordances: &["looking at"] },
    Kind { label: "window", half: [0.6, 0.05, 0.6], z: 1.4, affordances: &["opening"] },
    Kind { label: "mirror", half: [0.3, 0.03, 0.5], z: 1.5, affordances: &["checking appearance"] },
    Kind { label: "shelf", half: [0.5, 0.2, 0.9], z: 0.9, affordances: &["storing in", "placing items on"] },
];

const COLORS: &[&str] = &["white", "black", "brown", "gray", "red", "blue", "green", "beige"];
const SIZES: &[&str] = &["small", "large", "tall", "low"];
const SHAPES: &[&str] = &["rectangular", "round", "square"];

/// Random furnished room with 8 to 14 objects and at least one low object.
pub fn random_scene<R: Rng + ?Sized>(rng: &mut R, id: &str) -> Scene {
    let width = rng.random_range(6.0..10.0);
    let depth = rng.random_range(5.0..8.0);
    let n = rng.random_range(8..=14);
    let mut objects: Vec<Object3D> = Vec::with_capacity(n);
    let mut attempts = 0;
    while objects.len() < n && attempts < 2000 {
        attempts += 1;
        // first pick from the low half of the catalog so pivots always exist
        let kind = if objects.len() < 3 {
            &CATALOG[rng.random_range(0..10)]
        } else {
            CATALOG.choose(rng).expect("catalog")
        };
        let yaw = *[0.0, 90.0, 180.0, 270.0].choose(rng).expect("yaws") + rng.random_range(-20.0..20.0);
        let center = [
            rng.random_range(-width / 2.0..width / 2.0),
            rng.random_range(-depth / 2.0..depth / 2.0),
            kind.z,
        ];
        let id_num = objects.len() + 1;
        let mut object = Object3D::new(
            format!("{}_{id_num}", kind.label.replace(' ', "_")),
            kind.label,
            Obb3D::new(center, kind.half, yaw),
        );
        let fp = footprint2d(&object).inflate(0.15);
        let overlaps = objects.iter().any(|o| {
            let other = footprint2d(o);
            // only floor-standing objects block each other
            o.obb.center[2] < 1.0
                && kind.z < 1.0
                && fp.min[0] < other.max[0]
                && other.min[0] < fp.max[0]
                && fp.min[1] < other.max[1]
                && other.min[1] < fp.max[1]
        });
        if overlaps {
            continue;
        }
        object = object.with_attribute("color", COLORS.choose(rng).expect("colors"));
        if rng.random_bool(0.5) {
            object = object.with_attribute("size", SIZES.choose(rng).expect("sizes"));
        }
        if rng.random_bool(0.3) {
            object = object.with_attribute("shape", SHAPES.choose(rng).expect("shapes"));
        }
        for a in kind.affordances {
            object = object.with_affordance(a);
        }
        if let Some(prev) = objects.last() {
            if rng.random_bool(0.4) {
                object = object.with_relation(&format!("close by {}", prev.id));
            }
        }
        objects.push(object);
    }
    Scene::new(id, objects).expect("generated scene is valid")
}
