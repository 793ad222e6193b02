mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use spatial_qa::io::pipeline::run_on_scenes;
use spatial_qa::io::PipelineConfig;
use spatial_qa::qa::{AnswerKind, TemplateBank};
use spatial_qa::synth::{synth_scene, SynthConfig};

fn check_invariants(cfg: &PipelineConfig, scenes: Vec<spatial_qa::scene::Scene>) -> Result<usize, TestCaseError> {
    let out = run_on_scenes(scenes, vec![], cfg, &TemplateBank::default()).unwrap();
    let sets: BTreeMap<(String, String), BTreeSet<String>> = out
        .sets
        .iter()
        .map(|s| ((s.scene_id.clone(), s.image_set_id.clone()), s.frame_ids.iter().map(|f| f.0.clone()).collect()))
        .collect();
    let ids: BTreeSet<&str> = out.items.iter().map(|i| i.qa_id.as_str()).collect();
    prop_assert_eq!(ids.len(), out.items.len());

    let mut per_template: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
    let mut per_set: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for it in &out.items {
        let members = &sets[&(it.scene_id.0.clone(), it.image_set_id.clone())];
        prop_assert!(it.frame_ids.iter().all(|f| members.contains(&f.0)), "{} uses frames outside its set", it.qa_id);
        match it.answer_kind {
            AnswerKind::Mcq => {
                prop_assert!((2..=6).contains(&it.options.len()));
                let distinct: BTreeSet<&String> = it.options.iter().collect();
                prop_assert_eq!(distinct.len(), it.options.len());
                prop_assert!(it.correct_option().is_some());
            }
            AnswerKind::Numeric => {
                let n = it.numeric_answer.expect("numeric answer");
                prop_assert!(n.value >= 0.0 && ((n.value * 10.0).round() - n.value * 10.0).abs() < 1e-9);
            }
        }
        *per_template.entry((it.scene_id.as_str(), it.image_set_id.as_str(), it.task.as_str())).or_default() += 1;
        *per_set.entry((it.scene_id.as_str(), it.image_set_id.as_str())).or_default() += 1;
    }
    prop_assert!(per_template.values().all(|n| *n <= cfg.balance.per_template_per_set));
    prop_assert!(per_set.values().all(|n| *n <= cfg.balance.per_set_total));
    prop_assert_eq!(out.manifest.revalidation_failures, 0);
    for r in out.cot.iter().filter(|r| !r.dropped) {
        let it = out.items.iter().find(|i| i.qa_id == r.qa_id).unwrap();
        let letter = it.correct_index.map(|i| spatial_qa::qa::OPTION_LETTERS[i].to_string());
        prop_assert_eq!(&r.final_answer, &letter);
    }
    Ok(out.items.len())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn emitted_items_hold_invariants(seed in 0u64..10_000, objects in 4usize..10, dup in any::<bool>()) {
        let synth = SynthConfig { n_objects: objects, duplicate_category: dup, ..Default::default() };
        let scenes = vec![synth_scene("p0", &synth, seed), synth_scene("p1", &synth, seed + 1)];
        let cfg = PipelineConfig { seed, ..Default::default() };
        check_invariants(&cfg, scenes)?;
    }
}

#[test]
fn corpus_holds_invariants() {
    let n = check_invariants(&common::corpus_config(), common::corpus_scenes()).unwrap();
    assert!(n > 400, "{n} items");
}

#[test]
fn numeric_as_mcq_keeps_answers() {
    let mut cfg = common::corpus_config();
    cfg.qa.numeric_as_mcq = true;
    cfg.cot.enabled = false;
    let out = run_on_scenes(common::corpus_scenes(), vec![], &cfg, &TemplateBank::default()).unwrap();
    assert!(out.items.iter().all(|i| i.answer_kind == AnswerKind::Mcq));
    assert!(out.items.iter().any(|i| i.task.starts_with("mm_")));
    assert_eq!(out.manifest.revalidation_failures, 0);
}

#[test]
fn seed_changes_output() {
    let a = run_on_scenes(common::corpus_scenes(), vec![], &common::corpus_config(), &TemplateBank::default()).unwrap();
    let cfg = PipelineConfig { seed: 8, ..common::corpus_config() };
    let b = run_on_scenes(common::corpus_scenes(), vec![], &cfg, &TemplateBank::default()).unwrap();
    assert_ne!(a.items, b.items);
}
