use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oculobench_core::cohort::synthetic::{random_manifest, simple_manifest, SyntheticCase};
use oculobench_core::cohort::CohortManifest;
use oculobench_core::dialogue::{parse_turns, validate_dialogue, DialogueMode, DialogueRecord};
use oculobench_core::inference::{write_predictions, Prediction, PromptKind};
use oculobench_core::provenance::sha256_hex;
use oculobench_core::study::PublicPlan;
use oculobench_core::{ExamLabels, PartialLabels};

const JSON_DIALOGUE: &str = include_str!("fixtures/json_dialogue.txt");

fn oculobench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oculobench"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_manifest(dir: &Path, manifest: &CohortManifest) -> PathBuf {
    let path = dir.join("m.jsonl");
    std::fs::write(&path, manifest.to_jsonl()).unwrap();
    std::fs::create_dir_all(dir.join("images")).unwrap();
    for r in manifest.records() {
        std::fs::write(dir.join(&r.image_path), format!("jpeg:{}", r.image_id)).unwrap();
    }
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Every file under `root` except the run log, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_log.jsonl" {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn split_writes_manifests_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &random_manifest(5, 50, 3));
    let out = oculobench(dir.path(), &["split", "--manifest", "m.jsonl", "--ratios", "0.78,0,0.22", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let run = dir.path().join("run");
    let split = json(&run.join("manifests/split.json"));
    assert_eq!(split["provenance"]["seeds"]["split"], 7);
    assert_eq!(split["provenance"]["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(split["provenance"]["tool"], "oculobench");
    let train = split["splits"]["train"].as_array().unwrap().len();
    let test = split["splits"]["test"].as_array().unwrap().len();
    assert_eq!(train + test, 50);
    assert!(split["splits"]["val"].as_array().unwrap().is_empty());
    for s in ["train", "test"] {
        let p = run.join(format!("manifests/{s}.jsonl"));
        assert!(p.exists());
        let side = json(&run.join(format!("manifests/{s}.jsonl.provenance.json")));
        assert_eq!(side["seeds"]["split"], 7);
    }

    let log = std::fs::read_to_string(run.join("run_log.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(entry["command"], "split");
    assert_eq!(entry["exit_code"], 0);
    assert_eq!(entry["outputs"].as_array().unwrap().len(), 7);
}

#[test]
fn unknown_subcommand_exits_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = oculobench(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &random_manifest(1, 10, 2));
    // No seed anywhere.
    let out = oculobench(dir.path(), &["split", "--manifest", "m.jsonl", "--ratios", "0.5,0,0.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
    // Ratios that do not sum to one.
    let out = oculobench(dir.path(), &["split", "--manifest", "m.jsonl", "--ratios", "0.5,0.5,0.5", "--seed", "1"]);
    assert_eq!(code(&out), 2);
    // Unknown config key.
    std::fs::write(dir.path().join("bad.toml"), "bootstrap = 10\n").unwrap();
    let out = oculobench(dir.path(), &["--config", "bad.toml", "split", "--ratios", "0.5,0,0.5"]);
    assert_eq!(code(&out), 2);
    // B = 0.
    std::fs::write(dir.path().join("zero.toml"), "bootstrap_resamples = 0\n").unwrap();
    let out = oculobench(dir.path(), &["--config", "zero.toml", "split", "--ratios", "0.5,0,0.5"]);
    assert_eq!(code(&out), 2);
    // Missing input file.
    let out = oculobench(dir.path(), &["split", "--manifest", "nope.jsonl", "--ratios", "0.5,0,0.5", "--seed", "1"]);
    assert_eq!(code(&out), 2);
}

fn prediction(image_id: &str, model: &str, drus: u8) -> Prediction {
    Prediction {
        image_id: image_id.into(),
        model_id: model.into(),
        prompt_kind: PromptKind::Closed,
        task_hint: None,
        prompt_digest: "fixture".into(),
        raw_text: String::new(),
        parsed: Some(PartialLabels { advamd: Some(0), pig: Some(0), drus: Some(drus) }),
        parse_error: None,
        source_span: None,
        latency_ms: 0,
        attempt: 1,
    }
}

/// Exact two-sided McNemar p from binomial coefficients.
fn mcnemar_oracle(b: u64, c: u64) -> f64 {
    let n = b + c;
    let k = b.min(c);
    let mut choose = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            choose = choose * (n - i + 1) as f64 / i as f64;
        }
        tail += choose;
    }
    (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
}

#[test]
fn compare_reports_mcnemar_and_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    // 20 cases with DRUS truth i % 3; A right on 0..17, B right on 0..10 and 17..19.
    let cases: Vec<SyntheticCase> = (0..20)
        .map(|i| {
            SyntheticCase::new(format!("C{i:02}"), format!("P{i:02}"))
                .with_labels(ExamLabels { advamd: 0, pig: 0, drus: (i % 3) as u8 })
        })
        .collect();
    let manifest = simple_manifest(&cases);
    write_manifest(dir.path(), &manifest);
    let wrong = |t: u8| (t + 1) % 3;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, r) in manifest.records().iter().enumerate() {
        let t = r.labels.drus;
        a.push(prediction(&r.image_id, "model-a", if i < 17 { t } else { wrong(t) }));
        b.push(prediction(&r.image_id, "model-b", if i < 10 || (17..19).contains(&i) { t } else { wrong(t) }));
    }
    write_predictions(std::fs::File::create(dir.path().join("preds_a.jsonl")).unwrap(), &a).unwrap();
    write_predictions(std::fs::File::create(dir.path().join("preds_b.jsonl")).unwrap(), &b).unwrap();

    let args = ["compare", "--task", "DRUS", "--a", "preds_a.jsonl", "--b", "preds_b.jsonl", "--seed", "11", "--manifest", "m.jsonl"];
    let out = oculobench(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("run/metrics/compare_model-a_vs_model-b.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# oculobench") && prov.contains("bootstrap=11"), "{prov}");
    assert_eq!(lines.next().unwrap(), "task,model_a,model_b,b,c,p_accuracy,p_f1");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..5], ["DRUS", "model-a", "model-b", "7", "2"]);
    let p: f64 = row[5].parse().unwrap();
    assert!((p - mcnemar_oracle(7, 2)).abs() < 1e-6, "{p}");
    assert!((p - 92.0 / 512.0).abs() < 1e-6);
    let p_f1: f64 = row[6].trim_start_matches('<').parse().unwrap();
    assert!((0.0..=1.0).contains(&p_f1));

    let again = oculobench(dir.path(), &args);
    assert_eq!(code(&again), 0);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);

    // A different seed changes only the bootstrap column and the provenance.
    let mut other = args.to_vec();
    other[8] = "12";
    assert_eq!(code(&oculobench(dir.path(), &other)), 0);
    let text12 = std::fs::read_to_string(&path).unwrap();
    assert!(text12.contains("bootstrap=12"));
    assert!(text12.lines().nth(2).unwrap().starts_with("DRUS,model-a,model-b,7,2,0.179688,"));

    // Without a seed there is no bootstrap output.
    let no_seed: Vec<&str> = args.iter().copied().filter(|a| *a != "--seed" && *a != "11").collect();
    assert_eq!(code(&oculobench(dir.path(), &no_seed)), 2);
}

#[test]
fn validate_accepts_the_reference_dialogue() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simple_manifest(&[
        SyntheticCase::new("EX1", "P1").with_labels(ExamLabels { advamd: 0, pig: 0, drus: 1 }),
        SyntheticCase::new("EX2", "P2").with_labels(ExamLabels { advamd: 1, pig: 1, drus: 2 }),
    ]);
    write_manifest(dir.path(), &manifest);
    let turns = parse_turns(JSON_DIALOGUE).unwrap();
    let records: Vec<DialogueRecord> = ["EX1", "EX2"]
        .iter()
        .map(|id| DialogueRecord {
            case_ref: id.to_string(),
            mode: DialogueMode::Json,
            validation: validate_dialogue(DialogueMode::Json, &turns, &manifest.get(id).unwrap().labels),
            turns: turns.clone(),
            attempts: 1,
            raw_text: None,
        })
        .collect();
    let lines: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(dir.path().join("d.jsonl"), &lines).unwrap();

    // EX2's labels contradict the dialogue: 50% invalid.
    let out = oculobench(dir.path(), &["validate", "--dialogues", "d.jsonl", "--manifest", "m.jsonl"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let summary = json(&dir.path().join("run/dialogues/d.validation.json"));
    assert_eq!(summary["valid"], 1);
    assert_eq!(summary["invalid_cases"], serde_json::json!(["EX2"]));
    assert_eq!(summary["failures"]["label_mismatch"], 1);

    let out = oculobench(dir.path(), &["validate", "--dialogues", "d.jsonl", "--manifest", "m.jsonl", "--max-invalid", "0.5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

const CONFIG: &str = r#"
manifest = "m.jsonl"
seed = 3
bootstrap_resamples = 200
concurrency = 4

[seeds]
bootstrap = 11

[endpoints.Qwen2-VL-7B]
base_url = "stub://0.9"
model = "qwen"

[endpoints.LLaVA-Med]
base_url = "stub://0.6"
model = "llava"

[study]
raters = 3
common_n = 4
unique_n = 4

[server.tokens]
R1 = "t1"
R2 = "t2"
R3 = "t3"
"#;

/// Deterministic 1-5 scores for a packet.
fn scores_for(rater: &str, packet: &str) -> [u8; 4] {
    let h = sha256_hex(format!("{rater}{packet}"));
    let b = h.as_bytes();
    [0, 1, 2, 3].map(|i| 1 + (b[i] % 5))
}

fn run_pipeline(dir: &Path, out: &str) {
    let steps: Vec<Vec<&str>> = vec![
        vec!["split", "--ratios", "0.5,0,0.5"],
        vec!["sample"],
        vec!["infer", "--model", "Qwen2-VL-7B"],
        vec!["infer", "--model", "LLaVA-Med"],
        vec!["infer", "--model", "Qwen2-VL-7B", "--kind", "open", "--hint", "DRUS"],
        vec!["score", "--predictions", "OUT/predictions/Qwen2-VL-7B_closed.jsonl", "OUT/predictions/LLaVA-Med_closed.jsonl"],
        vec!["compare", "--a", "OUT/predictions/Qwen2-VL-7B_closed.jsonl", "--b", "OUT/predictions/LLaVA-Med_closed.jsonl"],
        vec!["infer", "--model", "Qwen2-VL-7B", "--interview", "--case-set", "OUT/manifests/case_set.json"],
        vec!["infer", "--model", "LLaVA-Med", "--interview", "--case-set", "OUT/manifests/case_set.json"],
        vec!["plan"],
        vec!["export"],
    ];
    for step in steps {
        let mut args = vec!["--config", "config.toml", "--out", out];
        let owned: Vec<String> = step.iter().map(|s| s.replace("OUT", out)).collect();
        args.extend(owned.iter().map(String::as_str));
        let o = oculobench(dir, &args);
        assert_eq!(code(&o), 0, "{step:?}: {}", stderr(&o));
    }

    let plan: PublicPlan = serde_json::from_value(json(&dir.join(out).join("study/plan.json"))).unwrap();
    let mut lines = String::new();
    for (rater, queue) in &plan.queues {
        for packet in queue {
            let [q1, q2, q3, q4] = scores_for(rater, packet);
            lines.push_str(&format!(
                "{{\"packet_id\":\"{packet}\",\"rater_id\":\"{rater}\",\"q1\":{q1},\"q2\":{q2},\"q3\":{q3},\"q4\":{q4},\"timestamp\":\"2026-01-01T00:00:00Z\"}}\n"
            ));
        }
    }
    std::fs::write(dir.join(format!("{out}_scores.jsonl")), lines).unwrap();
    let scores = format!("{out}_scores.jsonl");
    for step in [vec!["ingest", "--scores", scores.as_str()], vec!["agree"], vec!["report"]] {
        let mut args = vec!["--config", "config.toml", "--out", out];
        args.extend(step.iter().copied());
        let o = oculobench(dir, &args);
        assert_eq!(code(&o), 0, "{step:?}: {}", stderr(&o));
    }
}

#[test]
fn stub_pipeline_runs_end_to_end_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &random_manifest(9, 60, 3));
    std::fs::write(dir.path().join("config.toml"), CONFIG).unwrap();
    run_pipeline(dir.path(), "a");
    let a = dir.path().join("a");

    let metrics = std::fs::read_to_string(a.join("metrics/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2 + 6);
    let open = std::fs::read_to_string(a.join("predictions/Qwen2-VL-7B_open_DRUS.jsonl")).unwrap();
    assert!(!open.is_empty());

    let packets = std::fs::read_to_string(a.join("study/packets.jsonl")).unwrap();
    assert_eq!(packets.lines().count(), 16 * 2);
    assert!(packets.contains("[redacted]"));
    for id in ["Qwen", "qwen2-vl-7b", "LLaVA", "llava-med"] {
        assert!(!packets.to_lowercase().contains(&id.to_lowercase()), "packets leak {id}");
    }
    let table = json(&a.join("study/score_table.json"));
    for c in table["completeness"].as_array().unwrap() {
        assert_eq!(c["scored"], c["assigned"]);
    }
    let summary = std::fs::read_to_string(a.join("study/summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("Average,")), "{summary}");
    let agreement = std::fs::read_to_string(a.join("study/agreement.csv")).unwrap();
    assert!(agreement.lines().nth(1).unwrap().starts_with("matrix,question,R1-R2,R1-R3,R2-R3"));
    let report = std::fs::read_to_string(a.join("report.md")).unwrap();
    for heading in ["## Cohort", "## Metrics", "## Rater study", "compare_Qwen2-VL-7B_vs_LLaVA-Med.csv"] {
        assert!(report.contains(heading), "report lacks {heading}");
    }

    // Every step logged with exit 0.
    let log = std::fs::read_to_string(a.join("run_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 14);
    for l in log.lines() {
        let e: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(e["exit_code"], 0);
    }

    // A fresh run directory reproduces every output byte for byte, apart from
    // measured latencies in prediction files.
    run_pipeline(dir.path(), "b");
    let (sa, sb) = (snapshot(&a), snapshot(&dir.path().join("b")));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (path, bytes) in &sa {
        if path.starts_with("predictions") && path.extension().is_some_and(|e| e == "jsonl") {
            let strip = |b: &[u8]| -> Vec<serde_json::Value> {
                String::from_utf8_lossy(b)
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("latency_ms");
                        v
                    })
                    .collect()
            };
            assert_eq!(strip(bytes), strip(&sb[path]), "{}", path.display());
        } else {
            assert_eq!(bytes, &sb[path], "{} differs between runs", path.display());
        }
    }

    // Re-running inference in place resumes and leaves the file untouched.
    let before = std::fs::read(a.join("predictions/LLaVA-Med_closed.jsonl")).unwrap();
    let o = oculobench(dir.path(), &["--config", "config.toml", "--out", "a", "infer", "--model", "LLaVA-Med"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(a.join("predictions/LLaVA-Med_closed.jsonl")).unwrap(), before);
}

#[test]
fn invalid_generations_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &random_manifest(2, 6, 2));
    std::fs::write(dir.path().join("config.toml"), CONFIG).unwrap();
    // The stub does not write dialogues, so every generation is invalid.
    let out = oculobench(
        dir.path(),
        &["--config", "config.toml", "gen", "--model", "Qwen2-VL-7B", "--manifest", "m.jsonl", "--limit", "3"],
    );
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let summary = json(&dir.path().join("run/dialogues/Qwen2-VL-7B_open_validation.json"));
    assert_eq!(summary["total"], 3);
    assert_eq!(summary["invalid"], 3);
    assert_eq!(summary["provenance"]["seeds"]["gen"], 3);
    let corpus = std::fs::read_to_string(dir.path().join("run/dialogues/Qwen2-VL-7B_open_corpus.jsonl")).unwrap();
    assert!(corpus.is_empty());
    let log = std::fs::read_to_string(dir.path().join("run/run_log.jsonl")).unwrap();
    assert!(log.contains("\"exit_code\":1"));
}
