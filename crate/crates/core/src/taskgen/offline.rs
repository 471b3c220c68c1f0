use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::dataset::DatasetExample;
use crate::geometry::{classify_direction, DirectionBin};
use crate::lexicon::{count_word, plural};
use crate::scene::normalize_degrees;
use crate::situated::{describe_with_attributes, SituatedObjectRecord, SituatedSceneGraph};

pub const OFFLINE_PROVENANCE: &str = "offline-template";

/// Examples produced per situation for each task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineConfig {
    pub captioning: usize,
    pub attr_rel: usize,
    pub affordance: usize,
    pub planning: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            captioning: 1,
            attr_rel: 3,
            affordance: 2,
            planning: 2,
        }
    }
}

impl OfflineConfig {
    pub fn per_situation(&self, task: TaskKind) -> usize {
        match task {
            TaskKind::Captioning => self.captioning,
            TaskKind::AttrRel => self.attr_rel,
            TaskKind::Affordance => self.affordance,
            TaskKind::Planning => self.planning,
        }
    }
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [rest @ .., last] => format!("{}, and {last}", rest.join(", ")),
    }
}

fn desc(r: &SituatedObjectRecord) -> String {
    describe_with_attributes(&r.label, &r.attributes)
}

/// Angle in (-45, 315]: clockwise sweep order starting at the front edge.
fn sweep_angle(angle: f64) -> f64 {
    if angle >= 315.0 {
        angle - 360.0
    } else {
        angle
    }
}

struct Draft {
    question: String,
    answer: String,
    target_ids: Vec<String>,
}

/// Template-based examples whose answers are read directly off the graph.
pub fn offline_generate<R: Rng + ?Sized>(task: TaskKind, graph: &SituatedSceneGraph, rng: &mut R) -> Vec<DatasetExample> {
    offline_generate_with(task, graph, rng, &OfflineConfig::default())
}

pub fn offline_generate_with<R: Rng + ?Sized>(
    task: TaskKind,
    graph: &SituatedSceneGraph,
    rng: &mut R,
    cfg: &OfflineConfig,
) -> Vec<DatasetExample> {
    let n = cfg.per_situation(task);
    let drafts = match task {
        TaskKind::Captioning => (0..n.min(1)).map(|_| caption(graph)).collect(),
        TaskKind::AttrRel => attr_rel(graph, rng, n),
        TaskKind::Affordance => affordance(graph, rng, n),
        TaskKind::Planning => planning(graph, rng, n),
    };
    drafts
        .into_iter()
        .map(|d| DatasetExample {
            scene_id: graph.scene_id.clone(),
            task,
            situation: graph.situation.clone(),
            question: d.question,
            answer: d.answer,
            target_ids: d.target_ids,
            provenance: OFFLINE_PROVENANCE.to_string(),
            fidelity: None,
        })
        .collect()
}

fn caption(graph: &SituatedSceneGraph) -> Draft {
    let mut records: Vec<&SituatedObjectRecord> = graph.records().collect();
    records.sort_by(|a, b| {
        sweep_angle(a.angle)
            .total_cmp(&sweep_angle(b.angle))
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    let items: Vec<String> = records
        .iter()
        .map(|r| {
            let d = desc(r);
            format!("{} {d} {}", article(&d), r.direction.phrase())
        })
        .collect();
    let mut answer = format!("You are facing the {}. ", graph.pivot_label);
    if items.is_empty() {
        answer.push_str("Nothing else is around you.");
    } else {
        answer.push_str(&format!("Turning clockwise from where you face, you see {}.", join_and(&items)));
    }
    Draft {
        question: String::new(),
        answer,
        target_ids: Vec::new(),
    }
}

fn unique_in_bin(graph: &SituatedSceneGraph, r: &SituatedObjectRecord) -> bool {
    graph.count_label(r.direction, &r.label) == 1
}

fn count_draft(graph: &SituatedSceneGraph, label: &str, dir: DirectionBin) -> Draft {
    let mut ids: Vec<String> = graph
        .bucket(dir)
        .iter()
        .filter(|r| r.label == label)
        .map(|r| r.object_id.clone())
        .collect();
    if dir == DirectionBin::Front && graph.pivot_label == label {
        ids.insert(0, graph.situation.pivot_id.clone());
    }
    Draft {
        question: format!("How many {} are {}?", plural(label), dir.phrase()),
        answer: count_word(graph.count_label(dir, label)),
        target_ids: ids,
    }
}

fn attr_rel<R: Rng + ?Sized>(graph: &SituatedSceneGraph, rng: &mut R, n: usize) -> Vec<Draft> {
    let records: Vec<&SituatedObjectRecord> = graph.records().collect();
    let labels = graph.labels();

    let mut counting = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &records {
        if seen.insert((r.label.clone(), r.direction)) {
            counting.push(count_draft(graph, &r.label, r.direction));
        }
    }
    // a few questions whose answer is "none"
    for _ in 0..2 {
        let label = labels.choose(rng).expect("pivot label always present");
        let dir = *DirectionBin::ALL.choose(rng).expect("four bins");
        if seen.insert((label.clone(), dir)) {
            counting.push(count_draft(graph, label, dir));
        }
    }

    let color: Vec<Draft> = records
        .iter()
        .filter(|r| unique_in_bin(graph, r))
        .filter_map(|r| {
            let c = r.attributes.get("color")?;
            Some(Draft {
                question: format!("What color is the {} {}?", r.label, r.direction.phrase()),
                answer: format!("{}.", capitalize(c)),
                target_ids: vec![r.object_id.clone()],
            })
        })
        .collect();

    let mut comparison = Vec::new();
    let uniques: Vec<&&SituatedObjectRecord> = records.iter().filter(|r| unique_in_bin(graph, r)).collect();
    for (i, a) in uniques.iter().enumerate() {
        for b in &uniques[i + 1..] {
            if a.label == b.label || (a.distance - b.distance).abs() < 0.01 {
                continue;
            }
            let closer = rng.random_bool(0.5);
            let (word, tail) = if closer { ("closer", "to") } else { ("farther", "from") };
            let a_is_closer = a.distance < b.distance;
            let winner = if closer == a_is_closer { a } else { b };
            comparison.push(Draft {
                question: format!(
                    "Which is {word} {tail} you, the {} {} or the {} {}?",
                    a.label,
                    a.direction.phrase(),
                    b.label,
                    b.direction.phrase()
                ),
                answer: format!("The {} {}.", winner.label, winner.direction.phrase()),
                target_ids: vec![a.object_id.clone(), b.object_id.clone()],
            });
        }
    }

    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *totals.entry(r.label.as_str()).or_default() += 1;
    }
    *totals.entry(graph.pivot_label.as_str()).or_default() += 1;
    let location: Vec<Draft> = records
        .iter()
        .filter(|r| totals[r.label.as_str()] == 1)
        .map(|r| Draft {
            question: format!("Where is the {}?", r.label),
            answer: format!("{}, about {:.1} meters away.", capitalize(r.direction.phrase()), r.distance),
            target_ids: vec![r.object_id.clone()],
        })
        .collect();

    let mut pools = vec![counting, color, comparison, location];
    for p in pools.iter_mut() {
        p.shuffle(rng);
    }
    pools.shuffle(rng);
    let mut out = Vec::with_capacity(n);
    while out.len() < n && pools.iter().any(|p| !p.is_empty()) {
        for p in pools.iter_mut() {
            if out.len() == n {
                break;
            }
            if let Some(d) = p.pop() {
                out.push(d);
            }
        }
    }
    out
}

fn passby_sentence(graph: &SituatedSceneGraph, r: &SituatedObjectRecord) -> String {
    let mut names: Vec<String> = Vec::new();
    for id in &r.passby {
        let label = graph.record(id).map(|p| p.label.clone()).unwrap_or_else(|| {
            if *id == graph.situation.pivot_id {
                graph.pivot_label.clone()
            } else {
                id.clone()
            }
        });
        let name = format!("the {label}");
        if !names.contains(&name) {
            names.push(name);
        }
    }
    if names.is_empty() {
        String::new()
    } else {
        format!(" Be careful, you will pass by {} on the way.", join_and(&names))
    }
}

fn affordance<R: Rng + ?Sized>(graph: &SituatedSceneGraph, rng: &mut R, n: usize) -> Vec<Draft> {
    let mut nearest: BTreeMap<&str, &SituatedObjectRecord> = BTreeMap::new();
    for r in graph.records() {
        for a in &r.affordances {
            let better = match nearest.get(a.as_str()) {
                None => true,
                Some(cur) => (r.distance, &r.object_id) < (cur.distance, &cur.object_id),
            };
            if better {
                nearest.insert(a.as_str(), r);
            }
        }
    }
    let mut choices: Vec<(&str, &SituatedObjectRecord)> = nearest.into_iter().collect();
    choices.shuffle(rng);
    choices
        .into_iter()
        .take(n)
        .map(|(aff, r)| {
            let d = desc(r);
            Draft {
                question: format!("Which object should you go to for {aff}?"),
                answer: format!("The {d} {}.{}", r.direction.phrase(), passby_sentence(graph, r)),
                target_ids: vec![r.object_id.clone()],
            }
        })
        .collect()
}

fn first_turn(dir: DirectionBin) -> &'static str {
    match dir {
        DirectionBin::Front => "Go straight ahead",
        DirectionBin::Right => "Turn right",
        DirectionBin::Back => "Turn around",
        DirectionBin::Left => "Turn left",
    }
}

fn second_turn(delta: f64) -> &'static str {
    match classify_direction(normalize_degrees(delta)).unwrap_or(DirectionBin::Front) {
        DirectionBin::Front => "keep going straight",
        DirectionBin::Right => "turn right",
        DirectionBin::Back => "turn around",
        DirectionBin::Left => "turn left",
    }
}

fn planning<R: Rng + ?Sized>(graph: &SituatedSceneGraph, rng: &mut R, n: usize) -> Vec<Draft> {
    let usable: Vec<&SituatedObjectRecord> = graph.records().filter(|r| !r.affordances.is_empty()).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..usable.len() {
        for j in 0..usable.len() {
            if i != j && usable[i].label != usable[j].label {
                pairs.push((i, j));
            }
        }
    }
    pairs.shuffle(rng);
    pairs
        .into_iter()
        .take(n)
        .map(|(i, j)| {
            let (a, b) = (usable[i], usable[j]);
            let aff_a = a.affordances.choose(rng).expect("nonempty");
            let aff_b = b.affordances.choose(rng).expect("nonempty");
            Draft {
                question: format!("You need something for {aff_a}, and after that something for {aff_b}. How should you move?"),
                answer: format!(
                    "{} and walk to the {} {} for {aff_a}, then {} and walk to the {} for {aff_b}.",
                    first_turn(a.direction),
                    desc(a),
                    a.direction.phrase(),
                    second_turn(b.angle - a.angle),
                    desc(b)
                ),
                target_ids: vec![a.object_id.clone(), b.object_id.clone()],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fidelity_check;
    use crate::scene::{Obb3D, Object3D, Scene};
    use crate::situated::{build_situated_graph, sample_situation, situation_rng, SituationConfig, Situation};
    use crate::synth::{fig4_scene, random_scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chairs_left_graph() -> SituatedSceneGraph {
        // facing +y from the origin: x < 0 is left, x > 0 is right
        let b = |id: &str, label: &str, x: f64, y: f64| Object3D::new(id, label, Obb3D::new([x, y, 0.3], [0.2, 0.2, 0.3], 0.0));
        let scene = Scene::new(
            "chairs",
            vec![
                b("desk_1", "desk", 0.0, 1.0).with_affordance("working at"),
                b("chair_2", "chair", -2.0, 0.0).with_affordance("sitting on"),
                b("chair_3", "chair", -3.0, 0.5).with_affordance("sitting on"),
                b("sofa_4", "sofa", 2.5, 0.0).with_affordance("lying on").with_attribute("color", "green"),
            ],
        )
        .unwrap();
        let s = Situation::new(&scene, "desk_1", [0.0, 0.0], "sofa_4").unwrap();
        build_situated_graph(&scene, &s).unwrap()
    }

    #[test]
    fn counting_from_buckets() {
        let g = chairs_left_graph();
        let d = count_draft(&g, "chair", DirectionBin::Left);
        assert_eq!((d.question.as_str(), d.answer.as_str()), ("How many chairs are on your left?", "2"));
        let d = count_draft(&g, "chair", DirectionBin::Right);
        assert_eq!(d.answer, "none");
        let d = count_draft(&g, "desk", DirectionBin::Front);
        assert_eq!((d.answer.as_str(), d.target_ids.as_slice()), ("1", &["desk_1".to_string()][..]));
    }

    #[test]
    fn nearest_affordance_names_object_and_direction() {
        let g = chairs_left_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = offline_generate_with(TaskKind::Affordance, &g, &mut rng, &OfflineConfig { affordance: 10, ..Default::default() });
        let lying = xs.iter().find(|e| e.question.contains("lying on")).unwrap();
        assert_eq!(lying.answer, "The green sofa on your right.");
        let sitting = xs.iter().find(|e| e.question.contains("sitting on")).unwrap();
        assert_eq!(sitting.target_ids, vec!["chair_2".to_string()]);
        assert!(sitting.answer.contains("on your left"));
    }

    #[test]
    fn fig4_affordance_passby_and_caption() {
        let scene = fig4_scene();
        let s = Situation::new(&scene, "sofa_1", [0.0, -0.45], "tv_2").unwrap();
        let g = build_situated_graph(&scene, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = offline_generate_with(TaskKind::Affordance, &g, &mut rng, &OfflineConfig { affordance: 10, ..Default::default() });
        let storing = xs.iter().find(|e| e.question.contains("storing in")).unwrap();
        assert_eq!(
            storing.answer,
            "The brown kitchen cabinet on your right. Be careful, you will pass by the table on the way."
        );
        let cap = offline_generate(TaskKind::Captioning, &g, &mut rng);
        assert_eq!(cap.len(), 1);
        assert!(cap[0].question.is_empty());
        let a = &cap[0].answer;
        let order: Vec<usize> = ["black tv", "brown kitchen cabinet", "rectangular white table", "wall", "window"]
            .iter()
            .map(|w| a.find(w).unwrap_or_else(|| panic!("{w} missing from {a}")))
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{a}");
    }

    #[test]
    fn offline_examples_pass_fidelity() {
        let mut scene_rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SituationConfig::default();
        let mut total = 0;
        for i in 0..30 {
            let scene = random_scene(&mut scene_rng, &format!("room_{i}"));
            for task in TaskKind::ALL {
                for k in 0..4 {
                    let mut rng = situation_rng(9, &scene.id, task.as_str(), k);
                    let s = sample_situation(&scene, &mut rng, &cfg).unwrap();
                    let g = build_situated_graph(&scene, &s).unwrap();
                    for e in offline_generate(task, &g, &mut rng) {
                        let r = fidelity_check(&e, &g).unwrap();
                        assert!(r.passed, "{e:?}\n{r:?}");
                        assert!(!e.answer.is_empty());
                        assert_eq!(e.question.is_empty(), task == TaskKind::Captioning);
                        total += 1;
                    }
                }
            }
        }
        assert!(total > 800, "{total}");
    }

    #[test]
    fn yields_match_config() {
        let scene = fig4_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_situation(&scene, &mut rng, &SituationConfig::default()).unwrap();
        let g = build_situated_graph(&scene, &s).unwrap();
        let cfg = OfflineConfig::default();
        for task in TaskKind::ALL {
            assert_eq!(offline_generate(task, &g, &mut rng).len(), cfg.per_situation(task), "{task}");
        }
    }
}
