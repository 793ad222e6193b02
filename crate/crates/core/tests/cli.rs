mod common;

use std::path::Path;
use std::process::Command;

use spatial_qa::io::scene_to_json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spatial-qa"))
}

fn code(cmd: &mut Command) -> i32 {
    let out = cmd.output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn write_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for s in common::corpus_scenes() {
        std::fs::write(dir.join(format!("{}.json", s.scene_id)), scene_to_json(&s)).unwrap();
    }
}

#[test]
fn end_to_end_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let (scenes, out) = (tmp.path().join("scenes"), tmp.path().join("out"));
    write_corpus(&scenes);

    assert_eq!(code(bin().args(["generate", "--seed", "7", "--scenes"]).arg(&scenes).arg("--out").arg(&out)), 0);
    for f in ["qa.jsonl", "cot.jsonl", "variants.jsonl", "image_sets.jsonl", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let qa = out.join("qa.jsonl");
    assert_eq!(
        code(
            bin()
                .arg("ingest-validate")
                .arg(&scenes)
                .arg("--seed")
                .arg("7")
                .arg("--qa")
                .arg(&qa)
                .arg("--sets")
                .arg(out.join("image_sets.jsonl"))
        ),
        0
    );

    let variants = tmp.path().join("v.jsonl");
    assert_eq!(code(bin().arg("emit-circular").arg("--qa").arg(&qa).arg("--out").arg(&variants)), 0);
    let a = std::fs::read_to_string(&variants).unwrap();
    let b = std::fs::read_to_string(out.join("variants.jsonl")).unwrap();
    assert_eq!(a, b);

    let blind = tmp.path().join("blind.jsonl");
    assert_eq!(code(bin().arg("strip-vision").arg("--qa").arg(&qa).arg("--out").arg(&blind)), 0);
    assert!(!std::fs::read_to_string(&blind).unwrap().contains(".jpg"));

    let preds = tmp.path().join("pred.jsonl");
    let rows: String = std::fs::read_to_string(&qa)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{{\"qa_id\":{},\"raw_text\":\"A\"}}\n", v["qa_id"])
        })
        .collect();
    std::fs::write(&preds, rows).unwrap();
    let report = tmp.path().join("report.json");
    let csv = tmp.path().join("report.csv");
    assert_eq!(
        code(
            bin()
                .arg("score")
                .arg("--qa")
                .arg(&qa)
                .arg("--predictions")
                .arg(&preds)
                .arg("--out")
                .arg(&report)
                .arg("--csv")
                .arg(&csv)
        ),
        0
    );
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["overall"].as_f64().unwrap() >= 0.0);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("capability"));

    let radar = tmp.path().join("radar.csv");
    let m1 = format!("a={}", report.display());
    let m2 = format!("b={}", report.display());
    assert_eq!(code(bin().arg("report").args(["--model", &m1, "--model", &m2]).arg("--out").arg(&radar)), 0);
    assert!(std::fs::read_to_string(&radar).unwrap().starts_with("axis,model,raw,normalized"));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = tmp.path().join("scenes");
    write_corpus(&scenes);
    let out = tmp.path().join("out");

    assert_eq!(
        code(
            bin()
                .arg("generate")
                .arg("--scenes")
                .arg(&scenes)
                .arg("--out")
                .arg(&out)
                .args(["--set", "qa.margin_deg=60"])
        ),
        2
    );
    assert_eq!(code(bin().arg("generate").arg("--scenes").arg(tmp.path().join("nowhere")).arg("--out").arg(&out)), 4);

    std::fs::write(scenes.join("zz_broken.json"), "not json").unwrap();
    assert_eq!(code(bin().arg("generate").arg("--no-cot").arg("--scenes").arg(&scenes).arg("--out").arg(&out)), 3);
    assert_eq!(code(bin().arg("ingest-validate").arg(scenes.join("zz_broken.json"))), 2);
}
