//! Task prompts, LLM completion client, response parsing and the offline
//! template generator.

mod client;
mod offline;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use client::{AuditRecord, ClientConfig, ClientError, Completion, LlmClient};
pub use offline::{offline_generate, offline_generate_with, OfflineConfig, OFFLINE_PROVENANCE};
pub use parse::{format_qa, parse_caption, parse_qa, QAPair, RejectedFragment};

use crate::json::to_spaced_string;
use crate::scene::Scene;
use crate::situated::{describe_with_attributes, SituatedSceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Captioning,
    AttrRel,
    Affordance,
    Planning,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Captioning, TaskKind::AttrRel, TaskKind::Affordance, TaskKind::Planning];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Captioning => "captioning",
            TaskKind::AttrRel => "attr_rel",
            TaskKind::Affordance => "affordance",
            TaskKind::Planning => "planning",
        }
    }

    fn instructions(self) -> &'static str {
        match self {
            TaskKind::Captioning => include_str!("../../prompts/captioning.txt"),
            TaskKind::AttrRel => include_str!("../../prompts/attr_rel.txt"),
            TaskKind::Affordance => include_str!("../../prompts/affordance.txt"),
            TaskKind::Planning => include_str!("../../prompts/planning.txt"),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}` (expected captioning, attr_rel, affordance or planning)"))
    }
}

/// How spatial information is handed to the LLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Precomputed angles, distances and directions.
    Spa,
    /// Raw coordinates plus instructions for computing them.
    Cord,
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spa" => Ok(PromptStyle::Spa),
            "cord" => Ok(PromptStyle::Cord),
            _ => Err(format!("unknown prompt style `{s}` (expected spa or cord)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: TaskKind,
    pub style: PromptStyle,
    pub system_text: String,
    pub user_text: String,
    pub scene_id: String,
    pub situation_digest: String,
}

pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system.txt");
const SPA_PREAMBLE: &str = include_str!("../../prompts/spa_preamble.txt");
const CORD_PREAMBLE: &str = include_str!("../../prompts/cord_preamble.txt");

fn coord(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Serialize)]
struct CordObject<'a> {
    coordinate: [f64; 3],
    affordances: &'a [String],
    attributes: &'a std::collections::BTreeMap<String, String>,
    relations: &'a [String],
}

struct CordObjects<'a>(&'a Scene, &'a str);

impl Serialize for CordObjects<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(None)?;
        for o in self.0.objects.iter().filter(|o| o.id != self.1) {
            map.serialize_entry(
                &o.id,
                &CordObject {
                    coordinate: o.obb.center.map(crate::json::round2),
                    affordances: &o.affordances,
                    attributes: &o.attributes,
                    relations: &o.relations,
                },
            )?;
        }
        map.end()
    }
}

fn cord_graph_json(scene: &Scene, graph: &SituatedSceneGraph) -> String {
    to_spaced_string(&CordObjects(scene, &graph.situation.pivot_id))
}

/// Builds the system and user prompts for one task over one situated graph.
///
/// `Spa` embeds the scene-graph JSON; `Cord` embeds raw object coordinates
/// with the coordinate-calculation preamble. The task instructions are
/// appended unchanged from the prompt data files.
pub fn render_prompt(task: TaskKind, scene: &Scene, graph: &SituatedSceneGraph, style: PromptStyle) -> PromptBundle {
    let situation = &graph.situation;
    let pivot = scene.object(&situation.pivot_id);
    let pivot_attrs = pivot.map(|p| p.attributes.clone()).unwrap_or_default();
    let mut user = String::new();
    match style {
        PromptStyle::Spa => {
            let name = describe_with_attributes(&situation.pivot_id, &pivot_attrs);
            let article = if name.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
            user.push_str(&SPA_PREAMBLE.replace("{pivot}", &format!("{article} {name}")));
            user.push_str("\nSituation: ");
            user.push_str(&situation.description);
            user.push_str("\n\nScene graph:\n");
            user.push_str(&graph.to_json());
            user.push('\n');
        }
        PromptStyle::Cord => {
            let pivot_center = pivot.map(|p| p.obb.center).unwrap_or([0.0; 3]);
            let text = CORD_PREAMBLE
                .replace("{pivot_id}", &situation.pivot_id)
                .replace("{pivot}", &describe_with_attributes(&situation.pivot_id, &pivot_attrs))
                .replace("{stand}", &coord(&situation.stand))
                .replace("{pivot_center}", &coord(&pivot_center));
            user.push_str(&text);
            user.push_str("\nSituation: ");
            user.push_str(&situation.description);
            user.push_str("\n\nScene graph:\n");
            user.push_str(&cord_graph_json(scene, graph));
            user.push('\n');
        }
    }
    user.push('\n');
    user.push_str(task.instructions());
    PromptBundle {
        task,
        style,
        system_text: SYSTEM_PROMPT.trim_end().to_string(),
        user_text: user,
        scene_id: graph.scene_id.clone(),
        situation_digest: situation.digest(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::situated::{build_situated_graph, Situation};
    use crate::synth::fig4_scene;

    fn fixture() -> (Scene, SituatedSceneGraph) {
        let scene = fig4_scene();
        let s = Situation::new(&scene, "sofa_1", [0.0, -0.45], "tv_2").unwrap();
        let g = build_situated_graph(&scene, &s).unwrap();
        (scene, g)
    }

    #[test]
    fn planning_and_attr_rel_instructions() {
        let (scene, g) = fixture();
        let b = render_prompt(TaskKind::Planning, &scene, &g, PromptStyle::Spa);
        assert!(b.user_text.contains("generate 6 meaningful question-answer pairs"));
        let b = render_prompt(TaskKind::AttrRel, &scene, &g, PromptStyle::Cord);
        assert!(b.user_text.contains("You can calculate object distance and rotation angle"));
        assert!(b.user_text.contains("generate at least 10 meaningful question-answer pairs"));
        assert!(b.user_text.contains("the initial 3d coordinate is [0.00, -0.45, 0.00]"));
        assert!(b.user_text.contains(r#""table_8": {"coordinate": [2.0, -0.5, 0.4]"#), "{}", b.user_text);
    }

    #[test]
    fn spa_embeds_every_object() {
        let (scene, g) = fixture();
        let b = render_prompt(TaskKind::Affordance, &scene, &g, PromptStyle::Spa);
        for r in g.records() {
            assert!(b.user_text.contains(&format!("\"{}\"", r.object_id)));
        }
        assert!(b.user_text.starts_with("You are standing beside a gray sofa_1."));
        assert_eq!(b.system_text, "You are an AI visual assistant situated in a 3D scene.");
    }

    #[test]
    fn rendering_is_deterministic() {
        let (scene, g) = fixture();
        for task in TaskKind::ALL {
            for style in [PromptStyle::Spa, PromptStyle::Cord] {
                assert_eq!(render_prompt(task, &scene, &g, style), render_prompt(task, &scene, &g, style));
            }
        }
    }

    #[test]
    fn task_names_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(t.as_str().parse::<TaskKind>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("qa".parse::<TaskKind>().is_err());
    }
}
