//! Regenerates `fixtures/`: the 20 scene fixtures, a sample manifest and the
//! synthetic direction-bias prediction file.
//!
//! cargo run -p situated3d --example make_fixtures

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use situated3d::synth::{fig4_scene, random_scene};

const TARGETS: [&str; 10] = [
    "the sofa", "the door", "the window", "the fridge", "the bed", "the desk", "the sink", "the lamp", "the shelf",
    "the trash bin",
];
const TRUE_DIRECTIONS: [&str; 4] = ["Turn left.", "Turn right.", "Go straight ahead.", "Turn around, it is behind you."];

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let scenes = root.join("scenes");
    fs::create_dir_all(&scenes)?;
    fs::write(scenes.join("scene_00.json"), fig4_scene().to_json() + "\n")?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 1..20 {
        let id = format!("synthetic_room_{i:02}");
        fs::write(scenes.join(format!("scene_{i:02}.json")), random_scene(&mut rng, &id).to_json() + "\n")?;
    }

    // 97 of 100 direction answers say "left", one each says right, ahead and behind
    let mut lines = Vec::new();
    for i in 0..100 {
        let prediction = match i {
            17 => "Turn right.".to_string(),
            53 => "Go straight ahead.".to_string(),
            88 => "It is behind you, turn around.".to_string(),
            _ if rng.random_bool(0.5) => "Turn left.".to_string(),
            _ => format!("Turn left and walk to {}.", TARGETS[i % TARGETS.len()]),
        };
        lines.push(serde_json::json!({
            "key": format!("dir-{i:03}"),
            "question": format!("Which direction should I turn to reach {}?", TARGETS[i % TARGETS.len()]),
            "prediction": prediction,
            "reference": TRUE_DIRECTIONS[i % 4],
        }));
    }
    for i in 0..20 {
        let prediction = ["Zero.", "One.", "Two.", "Three."][i % 4];
        let reference = ["Zero.", "One.", "Two.", "Two."][i % 4];
        lines.push(serde_json::json!({
            "key": format!("count-{i:03}"),
            "question": "How many chairs are on your left?",
            "prediction": prediction,
            "reference": reference,
        }));
    }
    let eval = root.join("eval");
    fs::create_dir_all(&eval)?;
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(eval.join("direction_bias.jsonl"), text)?;

    fs::write(
        root.join("manifest.toml"),
        r#"# Offline run over the fixture scenes. Paths resolve against this file.
seed = 7
scene_dir = "scenes"
output_dir = "../../../target/fixture-run"
tasks = ["captioning", "attr_rel", "affordance", "planning"]
style = "spa"
mode = "offline"
workers = 0

[situations]
captioning = 5
attr_rel = 10
affordance = 10
planning = 5

[split]
seed = 0

[split.test_fraction]
captioning = 0.1389
attr_rel = 0.1177
affordance = 0.1252
planning = 0.1267

[client]
endpoint = "http://127.0.0.1:8000/v1/chat/completions"
model = "gpt-4o"
api_key_env = "OPENAI_API_KEY"
max_retries = 5
timeout_secs = 60.0
max_in_flight = 4
temperature = 1.0
"#,
    )?;
    println!("wrote {}", root.display());
    Ok(())
}
