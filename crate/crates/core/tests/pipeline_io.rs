mod common;

use std::path::{Path, PathBuf};

use spatial_qa::eval::PredictionRecord;
use spatial_qa::io::jsonl::{COT_SCHEMA, PREDICTION_SCHEMA, QA_SCHEMA};
use spatial_qa::io::pipeline::{ingest_dir, run_on_scenes, write_outputs};
use spatial_qa::io::{
    ingest_scene, parse_scene, read_jsonl, scene_to_json, write_jsonl, IoError, PipelineConfig, EXIT_PARTIAL,
};
use spatial_qa::qa::{Capability, QAItem, TemplateBank};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_frame_scene.json")
}

fn quick_config() -> PipelineConfig {
    let mut cfg = common::corpus_config();
    cfg.cot.enabled = false;
    cfg.output.emit_variants = false;
    cfg
}

#[test]
fn fixture_scene_loads() {
    let s = ingest_scene(&fixture()).unwrap();
    assert_eq!(s.scene_id.as_str(), "tiny");
    assert_eq!(s.frames.len(), 3);
    assert_eq!(s.objects.len(), 2);
    assert_eq!(s.points.as_ref().map(Vec::len), Some(200));
}

#[test]
fn scene_json_round_trips() {
    let s = ingest_scene(&fixture()).unwrap();
    let again = parse_scene(&scene_to_json(&s), "mem").unwrap();
    assert_eq!(again, s);
}

#[test]
fn missing_scene_field_is_named() {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["frames"][1].as_object_mut().unwrap().remove("intrinsics");
    match parse_scene(&v.to_string(), "broken.json") {
        Err(IoError::Schema { file, field, .. }) => {
            assert_eq!(file, "broken.json");
            assert!(field.contains("frames[1]"), "{field}");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn qa_file_round_trips() {
    let out = run_on_scenes(common::corpus_scenes(), vec![], &quick_config(), &TemplateBank::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qa.jsonl");
    write_jsonl(&path, QA_SCHEMA, &out.items).unwrap();
    let back: Vec<QAItem> = read_jsonl(&path, QA_SCHEMA).unwrap();
    assert_eq!(back, out.items);
    let first = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(first, r#"{"schema":"spatial-qa/qa","schema_version":"1"}"#);
}

#[test]
fn wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cot.jsonl");
    write_jsonl::<QAItem>(&path, COT_SCHEMA, &[]).unwrap();
    match read_jsonl::<QAItem>(&path, QA_SCHEMA) {
        Err(IoError::Schema { line, .. }) => assert_eq!(line, Some(1)),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn bad_prediction_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.jsonl");
    let body = format!(
        "{{\"schema\":\"{PREDICTION_SCHEMA}\",\"schema_version\":\"1\"}}\n{}\n{{\"raw_text\":\"B\"}}\n",
        serde_json::to_string(&PredictionRecord::new("q1", 0, "A")).unwrap()
    );
    std::fs::write(&path, body).unwrap();
    match read_jsonl::<PredictionRecord>(&path, PREDICTION_SCHEMA) {
        Err(IoError::Schema { line, message, .. }) => {
            assert_eq!(line, Some(3));
            assert!(message.contains("qa_id"), "{message}");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn corrupt_scene_fails_alone() {
    let dir = tempfile::tempdir().unwrap();
    for s in common::corpus_scenes().iter().take(2) {
        std::fs::write(dir.path().join(format!("{}.json", s.scene_id)), scene_to_json(s)).unwrap();
    }
    std::fs::write(dir.path().join("room99.json"), "{\"scene_id\": \"room99\", \"frames\": [").unwrap();
    let (scenes, failures) = ingest_dir(dir.path()).unwrap();
    assert_eq!(scenes.len(), 2);
    assert_eq!(failures.len(), 1);
    let out = run_on_scenes(scenes, failures, &quick_config(), &TemplateBank::default()).unwrap();
    assert_eq!(out.manifest.failed_scenes, 1);
    assert_eq!(out.exit_code(), EXIT_PARTIAL);
    assert!(!out.items.is_empty());
    assert!(out.manifest.scenes.iter().any(|r| r.scene_id == "room99" && r.failed && r.error.is_some()));
}

#[test]
fn duplicate_scene_ids_are_rejected() {
    let mut scenes = common::corpus_scenes();
    scenes.push(scenes[0].clone());
    assert!(run_on_scenes(scenes, vec![], &quick_config(), &TemplateBank::default()).is_err());
}

#[test]
fn capability_toggle_removes_items() {
    let mut cfg = quick_config();
    cfg.qa.capabilities.mm = false;
    let out = run_on_scenes(common::corpus_scenes(), vec![], &cfg, &TemplateBank::default()).unwrap();
    assert!(!out.items.is_empty());
    assert!(out.items.iter().all(|i| i.capability != Capability::Mm));
}

#[test]
fn manifest_is_written_and_counts_files() {
    let out =
        run_on_scenes(common::corpus_scenes(), vec![], &common::corpus_config(), &TemplateBank::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["files"]["qa.jsonl"], out.items.len());
    assert_eq!(m["files"]["cot.jsonl"], out.cot.len());
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}
