//! Scoring of model predictions: answer parsing, accuracy, MRA, circular
//! rotation protocols, no-vision sets, report aggregation and radar
//! normalization.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qa::{AnswerKind, Capability, QAItem, Unit, OPTION_LETTERS};

pub const MRA_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

pub const SOFT_CIRCULAR_DEFINITION: &str =
    "soft: mean over items of the fraction of cyclic option rotations answered correctly";
pub const HARD_CIRCULAR_DEFINITION: &str = "hard: fraction of items answered correctly under every cyclic rotation";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no answer could be parsed")]
    Unparseable,
    #[error("no prediction for {qa_id} at rotation {rotation}")]
    MissingVariantPrediction { qa_id: String, rotation: usize },
    #[error("more than one prediction for {qa_id} at rotation {rotation}")]
    DuplicatePrediction { qa_id: String, rotation: usize },
    #[error("{0} has a non-positive ground truth")]
    NonPositiveGroundTruth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Option(usize),
    Numeric(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub qa_id: String,
    #[serde(default)]
    pub variant_rotation: usize,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Parsed>,
}

impl PredictionRecord {
    pub fn new(qa_id: impl Into<String>, variant_rotation: usize, raw_text: impl Into<String>) -> Self {
        PredictionRecord { qa_id: qa_id.into(), variant_rotation, raw_text: raw_text.into(), parsed: None }
    }
}

static ANSWER_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap());
static LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^A-Za-z0-9])([A-F])(?:[^A-Za-z0-9]|$)").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(-?\d+(?:\.\d+)?|-?\.\d+)\s*(square\s+centimet(?:er|re)s?|square\s+met(?:er|re)s?|sq\.?\s*m|cm2|cm²|m2|m²|centimet(?:er|re)s?|cm|met(?:er|re)s?|m)?\b",
    )
    .unwrap()
});

fn normalize_text(s: &str) -> String {
    s.trim().trim_end_matches(['.', '!']).trim().to_lowercase()
}

fn parse_option(text: &str, qa: &QAItem) -> Option<usize> {
    let norm = normalize_text(text);
    if let Some(i) = qa.options.iter().position(|o| normalize_text(o) == norm) {
        return Some(i);
    }
    let mut at = 0;
    while let Some(c) = LETTER.captures_at(text, at) {
        let m = c.get(1).unwrap();
        let idx = OPTION_LETTERS.iter().position(|l| m.as_str().starts_with(*l)).unwrap();
        if idx < qa.options.len() {
            return Some(idx);
        }
        at = m.end();
    }
    None
}

fn parse_number(text: &str, unit: Unit) -> Option<f64> {
    let c = NUMBER.captures(text)?;
    let v: f64 = c.get(1)?.as_str().parse().ok()?;
    let u = c.get(2).map(|m| m.as_str().to_lowercase()).unwrap_or_default();
    let square_cm = u.starts_with("square c") || u == "cm2" || u == "cm²";
    let cm = !square_cm && u.starts_with('c');
    Some(match unit {
        Unit::Meters if cm => v / 100.0,
        Unit::SquareMeters if square_cm => v / 10_000.0,
        _ => v,
    })
}

/// Parses a raw model response against its item. Text inside an answer tag
/// is tried first, then the whole response.
pub fn parse_prediction(raw: &str, qa: &QAItem) -> Result<Parsed, EvalError> {
    let tagged = ANSWER_TAG.captures(raw).and_then(|c| c.get(1)).map(|m| m.as_str());
    let candidates = tagged.into_iter().chain(std::iter::once(raw));
    for text in candidates {
        let parsed = match qa.answer_kind {
            AnswerKind::Mcq => parse_option(text, qa).map(Parsed::Option),
            AnswerKind::Numeric => {
                let unit = qa.numeric_answer.map_or(Unit::Meters, |n| n.unit);
                parse_number(text, unit).map(Parsed::Numeric)
            }
        };
        if let Some(p) = parsed {
            return Ok(p);
        }
    }
    Err(EvalError::Unparseable)
}

pub type PredictionIndex<'a> = BTreeMap<(&'a str, usize), &'a str>;

/// Keys raw texts by (qa_id, rotation); duplicates are rejected so the
/// result never depends on row order.
pub fn index_predictions(preds: &[PredictionRecord]) -> Result<PredictionIndex<'_>, EvalError> {
    let mut out = BTreeMap::new();
    for p in preds {
        if out.insert((p.qa_id.as_str(), p.variant_rotation), p.raw_text.as_str()).is_some() {
            return Err(EvalError::DuplicatePrediction { qa_id: p.qa_id.clone(), rotation: p.variant_rotation });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub n: usize,
    pub unparseable: usize,
    pub missing: usize,
    /// Items left out of the denominator (non-positive numeric truth).
    pub excluded: usize,
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Fraction of MCQ items whose rotation-0 prediction parses to the correct
/// option. Missing and unparseable predictions count as wrong.
pub fn score_accuracy(items: &[QAItem], preds: &PredictionIndex<'_>) -> Score {
    let mut s = Score::default();
    let mut correct = 0usize;
    for it in items.iter().filter(|i| i.answer_kind == AnswerKind::Mcq) {
        s.n += 1;
        match preds.get(&(it.qa_id.as_str(), 0)) {
            None => s.missing += 1,
            Some(raw) => match parse_prediction(raw, it) {
                Ok(Parsed::Option(i)) if Some(i) == it.correct_index => correct += 1,
                Ok(_) => {}
                Err(_) => s.unparseable += 1,
            },
        }
    }
    s.value = mean(correct as f64, s.n);
    s
}

/// Per-item MRA: fraction of thresholds θ with relative error < 1 − θ.
pub fn mra_item(pred: f64, truth: f64, thresholds: &[f64]) -> Result<f64, EvalError> {
    if truth <= 0.0 {
        return Err(EvalError::NonPositiveGroundTruth(String::new()));
    }
    if thresholds.is_empty() {
        return Ok(0.0);
    }
    let rel = (pred - truth).abs() / truth;
    Ok(thresholds.iter().filter(|t| rel < 1.0 - **t).count() as f64 / thresholds.len() as f64)
}

pub fn score_mra(items: &[QAItem], preds: &PredictionIndex<'_>, thresholds: &[f64]) -> Score {
    let mut s = Score::default();
    let mut total = 0.0;
    for it in items.iter().filter(|i| i.answer_kind == AnswerKind::Numeric) {
        let truth = it.numeric_answer.map_or(0.0, |n| n.value);
        if truth <= 0.0 {
            s.excluded += 1;
            continue;
        }
        s.n += 1;
        match preds.get(&(it.qa_id.as_str(), 0)) {
            None => s.missing += 1,
            Some(raw) => match parse_prediction(raw, it) {
                Ok(Parsed::Numeric(v)) => total += mra_item(v, truth, thresholds).unwrap_or(0.0),
                Ok(_) => {}
                Err(_) => s.unparseable += 1,
            },
        }
    }
    s.value = mean(total, s.n);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationVariant {
    pub qa_id: String,
    pub rotation_k: usize,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    /// Stem plus the shifted lettered options.
    pub prompt: String,
    pub image_refs: Vec<String>,
}

/// Option list after moving the option at index i to (i + k) mod n.
pub fn rotate_options(options: &[String], k: usize) -> Vec<String> {
    let n = options.len();
    let mut out = vec![String::new(); n];
    for (i, o) in options.iter().enumerate() {
        out[(i + k) % n] = o.clone();
    }
    out
}

/// Item with its options cyclically shifted by `k`.
pub fn rotated_item(item: &QAItem, k: usize) -> QAItem {
    let n = item.options.len().max(1);
    let mut it = item.clone();
    it.options = rotate_options(&item.options, k % n);
    it.correct_index = item.correct_index.map(|c| (c + k) % n);
    it
}

/// Every cyclic rotation of every MCQ item; rotation 0 is the original.
/// Both circular protocols score the same variant set.
pub fn make_circular_variants(items: &[QAItem]) -> Vec<RotationVariant> {
    items
        .iter()
        .filter(|i| i.answer_kind == AnswerKind::Mcq && !i.options.is_empty())
        .flat_map(|item| {
            (0..item.options.len()).map(move |k| {
                let r = rotated_item(item, k);
                RotationVariant {
                    qa_id: item.qa_id.clone(),
                    rotation_k: k,
                    question: item.question.clone(),
                    prompt: r.render_prompt(),
                    correct_index: r.correct_index.unwrap_or(0),
                    options: r.options,
                    image_refs: item.image_refs.clone(),
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircularMode {
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularOutcome {
    pub qa_id: String,
    /// Correctness at each rotation k.
    pub correct: Vec<bool>,
}

impl CircularOutcome {
    pub fn soft(&self) -> f64 {
        mean(self.correct.iter().filter(|c| **c).count() as f64, self.correct.len())
    }

    pub fn hard(&self) -> bool {
        self.correct.iter().all(|c| *c)
    }
}

/// Per-rotation correctness of every MCQ item; every variant needs a
/// prediction.
pub fn circular_outcomes(items: &[QAItem], preds: &PredictionIndex<'_>) -> Result<Vec<CircularOutcome>, EvalError> {
    items
        .iter()
        .filter(|i| i.answer_kind == AnswerKind::Mcq && !i.options.is_empty())
        .map(|item| {
            let correct = (0..item.options.len())
                .map(|k| {
                    let raw = preds.get(&(item.qa_id.as_str(), k)).ok_or_else(|| {
                        EvalError::MissingVariantPrediction { qa_id: item.qa_id.clone(), rotation: k }
                    })?;
                    let r = rotated_item(item, k);
                    Ok(matches!(parse_prediction(raw, &r), Ok(Parsed::Option(i)) if Some(i) == r.correct_index))
                })
                .collect::<Result<Vec<bool>, EvalError>>()?;
            Ok(CircularOutcome { qa_id: item.qa_id.clone(), correct })
        })
        .collect()
}

pub fn score_circular(items: &[QAItem], preds: &PredictionIndex<'_>, mode: CircularMode) -> Result<f64, EvalError> {
    let outcomes = circular_outcomes(items, preds)?;
    let total: f64 = match mode {
        CircularMode::Soft => outcomes.iter().map(CircularOutcome::soft).sum(),
        CircularMode::Hard => outcomes.iter().filter(|o| o.hard()).count() as f64,
    };
    Ok(mean(total, outcomes.len()))
}

/// Same items without image references, flagged for text-only scoring.
pub fn strip_vision(items: &[QAItem]) -> Vec<QAItem> {
    items
        .iter()
        .map(|i| {
            let mut it = i.clone();
            it.image_refs.clear();
            it.no_vision = true;
            it
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub capability: Capability,
    pub task: String,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub mra: Option<f64>,
    pub soft_circular: Option<f64>,
    pub hard_circular: Option<f64>,
    pub no_vision_accuracy: Option<f64>,
    pub unparseable: usize,
    pub missing: usize,
    pub excluded: usize,
}

impl TaskRow {
    /// Accuracy for choice tasks, MRA for numeric ones.
    pub fn primary(&self) -> f64 {
        self.accuracy.or(self.mra).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRow {
    pub capability: Capability,
    pub tasks: usize,
    pub n: usize,
    /// Unweighted mean of the task primary scores.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub mra_thresholds: Vec<f64>,
    pub soft_circular_definition: String,
    pub hard_circular_definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tasks: Vec<TaskRow>,
    pub capabilities: Vec<CapabilityRow>,
    pub overall: f64,
    pub unparseable: usize,
    pub missing: usize,
    pub warnings: Vec<String>,
    /// Per-capability score, keyed by capability label.
    pub radar_values: BTreeMap<String, f64>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreInputs<'a> {
    pub predictions: Vec<PredictionRecord>,
    /// Predictions for circular variants, keyed by rotation.
    pub variant_predictions: Option<Vec<PredictionRecord>>,
    pub no_vision_predictions: Option<Vec<PredictionRecord>>,
    pub thresholds: Option<&'a [f64]>,
}

/// Scores each task group, then averages tasks into capabilities. Groups
/// with nothing to score are omitted with a warning.
pub fn aggregate_report(items: &[QAItem], inputs: &ScoreInputs<'_>) -> Result<MetricReport, EvalError> {
    let thresholds = inputs.thresholds.unwrap_or(&MRA_THRESHOLDS);
    let preds = index_predictions(&inputs.predictions)?;
    let variants = inputs.variant_predictions.as_deref().map(index_predictions).transpose()?;
    let no_vision = inputs.no_vision_predictions.as_deref().map(index_predictions).transpose()?;

    let mut groups: BTreeMap<(Capability, String), Vec<QAItem>> = BTreeMap::new();
    for it in items {
        groups.entry((it.capability, it.task.clone())).or_default().push(it.clone());
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let rows: Vec<Result<Option<TaskRow>, EvalError>> = groups
        .par_iter()
        .map(|((cap, task), group)| {
            let acc = score_accuracy(group, &preds);
            let mra = score_mra(group, &preds, thresholds);
            if acc.n + mra.n == 0 {
                return Ok(None);
            }
            let (soft, hard) = match (&variants, acc.n) {
                (Some(v), n) if n > 0 => (
                    Some(score_circular(group, v, CircularMode::Soft)?),
                    Some(score_circular(group, v, CircularMode::Hard)?),
                ),
                _ => (None, None),
            };
            let nv = no_vision.as_ref().map(|p| {
                let (a, m) = (score_accuracy(group, p), score_mra(group, p, thresholds));
                if a.n > 0 {
                    a.value
                } else {
                    m.value
                }
            });
            Ok(Some(TaskRow {
                capability: *cap,
                task: task.clone(),
                n: acc.n + mra.n,
                accuracy: (acc.n > 0).then_some(acc.value),
                mra: (mra.n > 0).then_some(mra.value),
                soft_circular: soft,
                hard_circular: hard,
                no_vision_accuracy: nv,
                unparseable: acc.unparseable + mra.unparseable,
                missing: acc.missing + mra.missing,
                excluded: mra.excluded,
            }))
        })
        .collect();

    let mut warnings = Vec::new();
    let mut tasks = Vec::new();
    for (r, ((_, task), _)) in rows.into_iter().zip(&groups) {
        match r? {
            Some(row) => tasks.push(row),
            None => warnings.push(format!("task {task}: no scorable items, omitted")),
        }
    }
    let mut capabilities = Vec::new();
    let mut radar_values = BTreeMap::new();
    for cap in Capability::ALL {
        let rows: Vec<&TaskRow> = tasks.iter().filter(|t| t.capability == cap).collect();
        if rows.is_empty() {
            warnings.push(format!("capability {}: no scored tasks", cap.label()));
            continue;
        }
        let score = rows.iter().map(|r| r.primary()).sum::<f64>() / rows.len() as f64;
        capabilities.push(CapabilityRow {
            capability: cap,
            tasks: rows.len(),
            n: rows.iter().map(|r| r.n).sum(),
            score,
        });
        radar_values.insert(cap.label().to_owned(), score);
    }
    let overall = mean(capabilities.iter().map(|c| c.score).sum(), capabilities.len());
    Ok(MetricReport {
        unparseable: tasks.iter().map(|t| t.unparseable).sum(),
        missing: tasks.iter().map(|t| t.missing).sum(),
        tasks,
        capabilities,
        overall,
        warnings,
        radar_values,
        metadata: ReportMetadata {
            mra_thresholds: thresholds.to_vec(),
            soft_circular_definition: SOFT_CIRCULAR_DEFINITION.into(),
            hard_circular_definition: HARD_CIRCULAR_DEFINITION.into(),
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Flat per-task CSV.
pub fn report_csv(report: &MetricReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "capability",
        "task",
        "n",
        "accuracy",
        "mra",
        "soft_circular",
        "hard_circular",
        "no_vision_accuracy",
        "unparseable",
        "missing",
    ])
    .expect("in-memory write");
    for t in &report.tasks {
        w.write_record([
            t.capability.label().to_owned(),
            t.task.clone(),
            t.n.to_string(),
            opt(t.accuracy),
            opt(t.mra),
            opt(t.soft_circular),
            opt(t.hard_circular),
            opt(t.no_vision_accuracy),
            t.unparseable.to_string(),
            t.missing.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Maps the worst model to 0.2 and the best to 1.0, linearly; if all
/// models tie they all map to 1.0.
pub fn normalize_radar(values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    let hi = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|(k, v)| {
            let span = hi - lo;
            // One division keeps the midpoint of the range at exactly 0.6.
            let n = if span <= 0.0 || *v >= hi {
                1.0
            } else if *v <= lo {
                0.2
            } else {
                ((0.2 * span + 0.8 * (v - lo)) / span).clamp(0.2, 1.0)
            };
            (k.clone(), n)
        })
        .collect()
}

/// Radar CSV across models: one row per (axis, model) with raw and
/// normalized values. Axes are the union of the models' radar keys.
pub fn radar_csv(reports: &BTreeMap<String, MetricReport>) -> String {
    let axes: BTreeSet<&String> = reports.values().flat_map(|r| r.radar_values.keys()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "model", "raw", "normalized"]).expect("in-memory write");
    for axis in axes {
        let raw: BTreeMap<String, f64> =
            reports.iter().filter_map(|(m, r)| r.radar_values.get(axis).map(|v| (m.clone(), *v))).collect();
        for (m, n) in normalize_radar(&raw) {
            w.write_record([axis.clone(), m.clone(), format!("{:.6}", raw[&m]), format!("{n:.6}")])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
