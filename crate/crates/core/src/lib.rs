//! Situated 3D scene understanding data pipeline.
//!
//! Scenes of labeled oriented boxes are turned into agent-centric
//! ("situated") scene graphs, which drive question/caption generation,
//! automated spatial-fidelity auditing and dataset emission. The crate also
//! carries a small numerics kit for spatially biased attention and an
//! evaluation kit for situated QA predictions.

pub mod align;
pub mod dataset;
pub mod evalkit;
pub mod geometry;
pub mod ingest;
pub mod json;
pub mod lexicon;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod situated;
pub mod synth;
pub mod taskgen;

pub use geometry::{DirectionBin, Quaternion, SpatialFeature};
pub use scene::{load_scene, Obb3D, Object3D, Rect2D, Scene, SceneError};
pub use situated::{Situation, SituatedObjectRecord, SituatedSceneGraph};
