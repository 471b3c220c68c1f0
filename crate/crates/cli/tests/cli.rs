use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use situated3d::dataset::DatasetExample;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_situated3d"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Copies the first `n` fixture scenes into `dir`.
fn scene_dir(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("scenes");
    fs::create_dir_all(&out).unwrap();
    for i in 0..n {
        let name = format!("scene_{i:02}.json");
        fs::copy(fixtures().join("scenes").join(&name), out.join(&name)).unwrap();
    }
    out
}

fn read_examples(path: &Path) -> Vec<DatasetExample> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const OUTPUTS: [&str; 5] = ["dataset.jsonl", "train.jsonl", "test.jsonl", "rejected.jsonl", "stats.json"];

fn generate(scenes: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "generate",
        "--scenes",
        scenes.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--situations",
        "attr_rel=4",
        "--situations",
        "affordance=4",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn generate_offline_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = scene_dir(tmp.path(), 3);
    let a = generate(&scenes, &tmp.path().join("a"), &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = generate(&scenes, &tmp.path().join("b"), &["--workers", "1"]);
    assert!(b.status.success());
    for f in OUTPUTS {
        let x = fs::read(tmp.path().join("a").join(f)).unwrap();
        let y = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(!x.is_empty() || f == "rejected.jsonl");
        assert!(x == y, "{f} differs");
    }
    let ds = read_examples(&tmp.path().join("a/dataset.jsonl"));
    assert!(ds.iter().all(|e| e.provenance == "offline-template"));
}

#[test]
fn resume_after_interrupt_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = scene_dir(tmp.path(), 3);
    let reference = tmp.path().join("ref");
    assert!(generate(&scenes, &reference, &[]).status.success());
    for kill in [1usize, 9, 40] {
        let out = tmp.path().join(format!("k{kill}"));
        let k = kill.to_string();
        let o = generate(&scenes, &out, &["--stop-after", &k, "--json"]);
        assert!(o.status.success());
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(summary["interrupted"], true);
        assert!(!out.join("dataset.jsonl").exists());
        let o = generate(&scenes, &out, &["--json"]);
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(summary["units_resumed"], kill);
        for f in OUTPUTS {
            assert!(fs::read(reference.join(f)).unwrap() == fs::read(out.join(f)).unwrap(), "{f} after kill {kill}");
        }
    }
}

#[test]
fn manifest_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    scene_dir(tmp.path(), 2);
    let manifest = tmp.path().join("run.toml");
    fs::write(
        &manifest,
        "seed = 3\nscene_dir = \"scenes\"\noutput_dir = \"out\"\ntasks = [\"captioning\", \"planning\"]\n\n[situations]\ncaptioning = 2\nplanning = 1\n",
    )
    .unwrap();
    let o = run(&["generate", "--manifest", manifest.to_str().unwrap(), "--situations", "planning=3", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["units_total"], 2 * (2 + 3));
    let ds = read_examples(&tmp.path().join("out/dataset.jsonl"));
    assert!(ds.iter().all(|e| matches!(e.task.as_str(), "captioning" | "planning")));

    fs::write(&manifest, "seeed = 3\n").unwrap();
    assert_eq!(run(&["generate", "--manifest", manifest.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&manifest, "[situations]\ncaptioning = 0\n").unwrap();
    assert_eq!(run(&["generate", "--manifest", manifest.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--scenes", "/nonexistent/dir"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--bogus-flag"]).status.code(), Some(1));
}

/// Answers every request with a caption or one affordance QA pair.
fn spawn_stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut stream = stream;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut len = 0;
                    loop {
                        let mut h = String::new();
                        reader.read_line(&mut h).unwrap();
                        if h.trim().is_empty() {
                            break;
                        }
                        if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    let user = req["messages"][1]["content"].as_str().unwrap_or("");
                    let content = if user.contains("caption") {
                        "Caption: A quiet room with some furniture."
                    } else {
                        "Q: Where can I rest for a while? A: Somewhere comfortable.\nQ: broken"
                    };
                    let reply = serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string();
                    let resp = format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{reply}", reply.len());
                    if stream.write_all(resp.as_bytes()).is_err() {
                        return;
                    }
                }
            });
        }
    });
    url
}

#[test]
fn online_mode_against_stub_names_the_model() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = scene_dir(tmp.path(), 2);
    let out = tmp.path().join("online");
    let url = spawn_stub();
    let o = run(&[
        "generate",
        "--scenes",
        scenes.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "online",
        "--endpoint",
        &url,
        "--model",
        "stub-model",
        "--api-key-env",
        "SITUATED3D_CLI_TEST_KEY",
        "--tasks",
        "captioning,affordance",
        "--situations",
        "captioning=2",
        "--situations",
        "affordance=2",
        "--json",
    ]);
    // key variable unset: every call fails with an auth error, logged as warnings
    assert!(o.status.success());
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["examples"], 0);
    let warnings = s["warnings"].as_array().unwrap();
    assert_eq!(warnings.len(), 8);
    assert!(warnings.iter().all(|w| w.as_str().unwrap().contains("authentication failed")));

    let out = tmp.path().join("online2");
    let o = bin()
        .env("SITUATED3D_CLI_TEST_KEY", "k")
        .args([
            "generate",
            "--scenes",
            scenes.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--mode",
            "online",
            "--endpoint",
            &url,
            "--model",
            "stub-model",
            "--api-key-env",
            "SITUATED3D_CLI_TEST_KEY",
            "--tasks",
            "captioning,affordance",
            "--situations",
            "captioning=2",
            "--situations",
            "affordance=2",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_examples(&out.join("dataset.jsonl"));
    assert!(!ds.is_empty());
    assert!(ds.iter().all(|e| e.provenance == "stub-model"));
    let rejected = fs::read_to_string(out.join("rejected.jsonl")).unwrap();
    assert!(rejected.contains("question without answer"));
    let audit = fs::read_to_string(out.join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 8);
}

#[test]
fn validate_accepts_offline_data_and_flags_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = scene_dir(tmp.path(), 2);
    let out = tmp.path().join("o");
    assert!(generate(&scenes, &out, &[]).status.success());
    let ds = out.join("dataset.jsonl");
    let o = run(&["validate", "--dataset", ds.to_str().unwrap(), "--scenes", scenes.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(" 0 failed"));

    let mut examples = read_examples(&ds);
    examples[0].target_ids.push("ghost_99".into());
    let bad = tmp.path().join("bad.jsonl");
    let text: String = examples.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
    fs::write(&bad, text).unwrap();
    let o = run(&["--json", "validate", "--dataset", bad.to_str().unwrap(), "--scenes", scenes.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["failed"], 1);
    assert!(r["failures"][0]["problems"][0].as_str().unwrap().contains("ghost_99"));

    assert_eq!(run(&["validate", "--dataset", "/nonexistent.jsonl", "--scenes", scenes.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn split_and_stats_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = scene_dir(tmp.path(), 6);
    let out = tmp.path().join("o");
    assert!(generate(&scenes, &out, &[]).status.success());
    let ds = out.join("dataset.jsonl");
    let parts = tmp.path().join("parts");
    let o = run(&["split", "--dataset", ds.to_str().unwrap(), "--out", parts.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train = read_examples(&parts.join("train.jsonl"));
    let test = read_examples(&parts.join("test.jsonl"));
    assert_eq!(train.len() + test.len(), read_examples(&ds).len());
    assert!(!test.is_empty());
    assert!(test.iter().all(|t| train.iter().all(|r| r.scene_id != t.scene_id)));

    let o = run(&["stats", "--json", "--dataset", ds.to_str().unwrap()]);
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["total"], train.len() + test.len());
    assert_eq!(s["fidelity_failed"], 0);
    assert_eq!(s["situations_per_scene"].as_object().unwrap().len(), 6);

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&["stats", "--json", "--dataset", empty.to_str().unwrap()]);
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["total"], 0);
}

#[test]
fn render_svg_elements_and_determinism() {
    let scene = fixtures().join("scenes/scene_00.json");
    let s = scene.to_str().unwrap();
    let a = stdout(&run(&["render", "--scene", s, "--situation-seed", "4"]));
    let b = stdout(&run(&["render", "--scene", s, "--situation-seed", "4"]));
    assert_eq!(a, b);
    assert_eq!(a.matches(r#"class="arrow""#).count(), 1);
    assert_eq!(a.matches("<polygon").count(), 6);
    assert_eq!(a.matches("class=\"wedge ").count(), 4);
    let plain = stdout(&run(&["render", "--scene", s]));
    assert!(!plain.contains("arrow") && plain.contains("scene-center"));
    assert_eq!(run(&["render", "--scene", "/nonexistent.json"]).status.code(), Some(1));
}

#[test]
fn eval_reproduces_left_bias() {
    let p = fixtures().join("eval/direction_bias.jsonl");
    let o = run(&["--json", "eval", "--predictions", p.to_str().unwrap()]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["direction_distribution"]["total"], 100);
    assert!((r["direction_distribution"]["fractions"]["left"].as_f64().unwrap() - 0.97).abs() < 1e-12);
    assert_eq!(r["count"], 120);
}

#[test]
fn align_check_exit_codes() {
    let o = run(&["align-check"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["--json", "align-check", "--count", "3"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["max_relative_error"].as_f64().unwrap() < 1e-5);
    assert_eq!(r["checks"].as_array().unwrap().len(), 3);
    assert_eq!(run(&["align-check", "--tolerance", "1e-30"]).status.code(), Some(2));
    assert_eq!(run(&["align-check", "--epsilon", "0.5"]).status.code(), Some(1));
}

#[test]
fn ingest_converts_semseg() {
    let tmp = tempfile::tempdir().unwrap();
    let semseg = tmp.path().join("semseg.v2.json");
    fs::write(
        &semseg,
        r#"{"scan_id": "scan-x", "segGroups": [
          {"objectId": 1, "label": "chair", "obb": {"centroid": [1, 2, 0.4], "axesLengths": [0.6, 0.5, 0.8], "normalizedAxes": [1, 0, 0, 0, 1, 0, 0, 0, 1]}},
          {"objectId": 2, "label": "table", "obb": {"centroid": [0, 0, 0.3], "axesLengths": [1.2, 0.8, 0.6], "normalizedAxes": [1, 0, 0, 0, 1, 0, 0, 0, 1]}}]}"#,
    )
    .unwrap();
    let out = tmp.path().join("scene.json");
    let o = run(&["ingest", "--semseg", semseg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scene = situated3d::load_scene(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(scene.id, "scan-x");
    assert_eq!(scene.objects.len(), 2);
    assert!(scene.contains_id("chair_1") && scene.contains_id("table_2"));

    fs::write(&semseg, "{").unwrap();
    assert_eq!(run(&["ingest", "--semseg", semseg.to_str().unwrap()]).status.code(), Some(1));
}
