use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::json;

use spatial_qa::eval::{
    index_predictions, mra_item, normalize_radar, parse_prediction, rotate_options, rotated_item, score_circular,
    CircularMode, EvalError, Parsed, PredictionRecord, MRA_THRESHOLDS,
};
use spatial_qa::qa::{QAItem, OPTION_LETTERS};

fn mcq(id: &str, options: &[&str], correct: usize) -> QAItem {
    serde_json::from_value(json!({
        "qa_id": id, "capability": "SR", "task": "sr_vertical", "question": "Where?",
        "answer_kind": "mcq", "options": options, "correct_index": correct,
        "scene_id": "s", "image_set_id": "s0", "frame_ids": [], "object_ids": [],
        "reference": "no_object", "slots": {}, "paraphrase": 0,
        "derivation": {"kind": "scene_size", "objects": 0, "square_meters": 0.0},
        "image_refs": []
    }))
    .unwrap()
}

fn numeric(id: &str, value: f64, unit: &str) -> QAItem {
    let mut it = mcq(id, &[], 0);
    it.answer_kind = spatial_qa::qa::AnswerKind::Numeric;
    it.options.clear();
    it.correct_index = None;
    it.numeric_answer = serde_json::from_value(json!({"value": value, "unit": unit})).unwrap();
    it
}

#[test]
fn parsing_examples() {
    let it = mcq("q", &["left", "right", "front", "back"], 1);
    assert_eq!(parse_prediction("B", &it), Ok(Parsed::Option(1)));
    assert_eq!(parse_prediction("The answer is (C).", &it), Ok(Parsed::Option(2)));
    assert_eq!(parse_prediction("I think A... <answer>D</answer>", &it), Ok(Parsed::Option(3)));
    assert_eq!(parse_prediction("right", &it), Ok(Parsed::Option(1)));
    assert_eq!(parse_prediction("E", &it), Err(EvalError::Unparseable));
    assert_eq!(parse_prediction("maybe", &it), Err(EvalError::Unparseable));

    let n = numeric("n", 2.0, "m");
    assert_eq!(parse_prediction("about 150 cm", &n), Ok(Parsed::Numeric(1.5)));
    assert_eq!(parse_prediction("<answer>2.4</answer> meters", &n), Ok(Parsed::Numeric(2.4)));
}

#[test]
fn duplicate_predictions_are_rejected() {
    let p = vec![PredictionRecord::new("q", 0, "A"), PredictionRecord::new("q", 0, "B")];
    assert!(matches!(index_predictions(&p), Err(EvalError::DuplicatePrediction { .. })));
}

#[test]
fn missing_variant_is_an_error() {
    let items = vec![mcq("q", &["a", "b", "c"], 0)];
    let p = vec![PredictionRecord::new("q", 0, "A"), PredictionRecord::new("q", 1, "B")];
    let idx = index_predictions(&p).unwrap();
    assert!(matches!(
        score_circular(&items, &idx, CircularMode::Soft),
        Err(EvalError::MissingVariantPrediction { .. })
    ));
}

proptest! {
    #[test]
    fn letters_parse_to_their_index(n in 2usize..=6, pick in 0usize..6) {
        let opts: Vec<String> = (0..n).map(|i| format!("opt{i}")).collect();
        let refs: Vec<&str> = opts.iter().map(String::as_str).collect();
        let it = mcq("q", &refs, 0);
        let letter = OPTION_LETTERS[pick].to_string();
        let parsed = parse_prediction(&letter, &it);
        if pick < n {
            prop_assert_eq!(parsed, Ok(Parsed::Option(pick)));
        } else {
            prop_assert_eq!(parsed, Err(EvalError::Unparseable));
        }
    }

    #[test]
    fn rotation_keeps_the_answer(n in 2usize..=6, correct in 0usize..6, k in 0usize..12) {
        let correct = correct % n;
        let opts: Vec<String> = (0..n).map(|i| format!("o{i}")).collect();
        let refs: Vec<&str> = opts.iter().map(String::as_str).collect();
        let it = mcq("q", &refs, correct);
        let r = rotated_item(&it, k);
        prop_assert_eq!(r.correct_option(), it.correct_option());
        prop_assert_eq!(rotate_options(&rotate_options(&opts, k % n), n - k % n), opts);
    }

    #[test]
    fn mra_is_a_fraction_and_exact_scores_one(truth in 0.01f64..1e3, rel in -3.0f64..3.0) {
        let v = mra_item(truth * (1.0 + rel), truth, &MRA_THRESHOLDS).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(mra_item(truth, truth, &MRA_THRESHOLDS).unwrap(), 1.0);
        prop_assert!((v * 10.0 - (v * 10.0).round()).abs() < 1e-9);
    }

    #[test]
    fn hard_never_exceeds_soft(answers in proptest::collection::vec((0usize..4, 0usize..4, 0usize..4, 0usize..4, 0usize..4), 1..20)) {
        let items: Vec<QAItem> = answers.iter().enumerate().map(|(i, a)| mcq(&format!("q{i}"), &["w", "x", "y", "z"], a.0)).collect();
        let preds: Vec<PredictionRecord> = answers
            .iter()
            .enumerate()
            .flat_map(|(i, a)| {
                [a.1, a.2, a.3, a.4].into_iter().enumerate().map(move |(k, p)| PredictionRecord::new(format!("q{i}"), k, OPTION_LETTERS[p].to_string()))
            })
            .collect();
        let idx = index_predictions(&preds).unwrap();
        let soft = score_circular(&items, &idx, CircularMode::Soft).unwrap();
        let hard = score_circular(&items, &idx, CircularMode::Hard).unwrap();
        prop_assert!(hard <= soft);
        prop_assert!((0.0..=1.0).contains(&soft));
    }

    #[test]
    fn radar_is_monotone_and_bounded(vals in proptest::collection::vec(-1e6f64..1e6, 1..10)) {
        let m: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, v)| (format!("{i}"), *v)).collect();
        let n = normalize_radar(&m);
        for (k, v) in &m {
            prop_assert!((0.2..=1.0).contains(&n[k]));
            for (k2, v2) in &m {
                if v < v2 {
                    prop_assert!(n[k] <= n[k2]);
                }
            }
        }
    }
}
