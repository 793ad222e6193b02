//! End-to-end generation: scenes in, QA / CoT / variant files and a run
//! manifest out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::jsonl::{write_jsonl, COT_SCHEMA, QA_SCHEMA, VARIANT_SCHEMA};
use super::schema::ingest_scene;
use super::IoError;
use crate::cot::{build_trace, trace_record, CotError, CotRecord, SUPPORTED_TASKS};
use crate::eval::{make_circular_variants, RotationVariant};
use crate::qa::{
    apply_ambiguity_filters, balance_sample, category_census, generate_for_set, revalidate_item, GenerationStats,
    QAItem, QaParams, SetContext, TemplateBank,
};
use crate::rng::derive_rng;
use crate::scene::{FrameId, ObjectId, PointId, Scene};
use crate::selection::{
    build_association_graph, filter_objects, filter_poses, select_coverage_frames, select_image_sets, AssociationGraph,
    AssociationInputs, ImageSet, ImageSetKind, SetPreference,
};
use crate::visibility::{frame_visibility, FrameVisibility, OcclusionPolicy};

pub const SETS_SCHEMA: &str = "spatial-qa/image-set";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSetRecord {
    pub scene_id: String,
    pub image_set_id: String,
    pub kind: ImageSetKind,
    pub frame_ids: Vec<FrameId>,
    pub s_min: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene_id: String,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub frames_total: usize,
    pub frames_kept: usize,
    pub objects_kept: usize,
    pub sets: usize,
    pub coverage_frames: usize,
    /// Candidates surviving the ambiguity filters, before balancing.
    pub qa_candidates: usize,
    pub qa_emitted: BTreeMap<String, usize>,
    pub cot_emitted: usize,
    pub cot_dropped: usize,
    pub rejected: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub scenes: Vec<SceneReport>,
    pub failed_scenes: usize,
    /// Record lines per emitted file.
    pub files: BTreeMap<String, usize>,
    pub qa_by_capability: BTreeMap<String, usize>,
    pub cot_drop_reasons: BTreeMap<String, usize>,
    pub revalidation_failures: usize,
    pub wall_time_s: f64,
}

/// Per-scene state retained for trace generation after balancing.
pub struct SceneArtifacts {
    pub scene: Scene,
    pub visibility: BTreeMap<FrameId, FrameVisibility>,
    pub graph: AssociationGraph,
    pub sets: Vec<ImageSet>,
}

pub struct PipelineOutput {
    pub items: Vec<QAItem>,
    pub cot: Vec<CotRecord>,
    pub variants: Vec<RotationVariant>,
    pub sets: Vec<ImageSetRecord>,
    pub manifest: RunManifest,
}

impl PipelineOutput {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.failed_scenes > 0 {
            super::EXIT_PARTIAL
        } else {
            super::EXIT_OK
        }
    }
}

pub fn scene_visibility(
    scene: &Scene,
    frames: &[crate::scene::Frame],
    policy: &OcclusionPolicy,
) -> BTreeMap<FrameId, FrameVisibility> {
    frames.par_iter().map(|f| (f.frame_id.clone(), frame_visibility(f, scene, policy))).collect()
}

fn has_duplicate_category(scene: &Scene, frames: &[FrameId], visibility: &BTreeMap<FrameId, FrameVisibility>) -> bool {
    category_census(scene, frames, visibility).values().any(|s| s.len() > 1)
}

struct SceneResult {
    report: SceneReport,
    items: Vec<QAItem>,
    artifacts: Option<SceneArtifacts>,
}

/// Output of the per-scene stages that precede generation.
pub struct PreparedScene {
    pub artifacts: SceneArtifacts,
    /// Objects passing the object filter, per kept frame.
    pub kept: BTreeMap<FrameId, BTreeSet<ObjectId>>,
    pub report: SceneReport,
}

/// Pose filter, visibility, object filter, association graph and image
/// sets for one scene. Errors leave a failed report.
pub fn prepare_scene(scene: Scene, cfg: &PipelineConfig) -> Result<PreparedScene, Box<SceneReport>> {
    let mut report =
        SceneReport { scene_id: scene.scene_id.0.clone(), frames_total: scene.frames.len(), ..Default::default() };
    let fail = |mut report: SceneReport, e: String| {
        report.failed = true;
        report.error = Some(e);
        Box::new(report)
    };
    let frames = match filter_poses(&scene.frames, &cfg.selection.pose) {
        Ok(f) => f,
        Err(e) => return Err(fail(report, e.to_string())),
    };
    report.frames_kept = frames.len();
    let visibility = scene_visibility(&scene, &frames, &cfg.occlusion);
    let records: Vec<_> = visibility.values().flat_map(|v| v.records.values().cloned()).collect();
    let kept = filter_objects(&scene, &records, &cfg.selection.objects);
    report.objects_kept = kept.values().flatten().collect::<BTreeSet<&ObjectId>>().len();

    let has_points = scene.points.as_ref().is_some_and(|p| !p.is_empty());
    let mode = cfg.selection.association_mode.resolve(has_points);
    let visible_points: BTreeMap<FrameId, BTreeSet<PointId>> =
        visibility.iter().map(|(f, v)| (f.clone(), v.visible_points.clone())).collect();
    let inputs = AssociationInputs { visible_points, kept_objects: kept.clone() };
    let graph = match build_association_graph(&frames, &scene, mode, &inputs) {
        Ok(g) => g,
        Err(e) => return Err(fail(report, e.to_string())),
    };

    let params = &cfg.selection.image_sets;
    let mut rng = derive_rng(cfg.seed, &[&scene.scene_id.0, "image-sets"]);
    let prefer = |set: &[FrameId]| has_duplicate_category(&scene, set, &visibility);
    let prefer_ref: SetPreference<'_> = if params.prefer_duplicate_categories { Some(&prefer) } else { None };
    let mut sets = select_image_sets(&graph, params, &mut rng, prefer_ref);

    if cfg.selection.coverage_enabled {
        let cov = select_coverage_frames(&frames, &inputs.visible_points, &cfg.selection.coverage);
        report.coverage_frames = cov.selected.len();
        if cov.selected.len() >= 2 {
            sets.push(ImageSet::from_frames(&graph, cov.selected, params.s_min, params.s_max, ImageSetKind::Coverage));
        }
    }
    report.sets = sets.len();
    Ok(PreparedScene { artifacts: SceneArtifacts { scene, visibility, graph, sets }, kept, report })
}

fn process_scene(scene: Scene, cfg: &PipelineConfig, bank: &TemplateBank) -> SceneResult {
    let PreparedScene { artifacts, kept, mut report } = match prepare_scene(scene, cfg) {
        Ok(r) => r,
        Err(report) => return SceneResult { report: *report, items: vec![], artifacts: None },
    };
    let mut stats = GenerationStats::default();
    let mut items = Vec::new();
    for (idx, set) in artifacts.sets.iter().enumerate() {
        let ctx = SetContext::new(&artifacts.scene, idx, set, &artifacts.visibility, &kept);
        let (generated, s) = generate_for_set(&ctx, &cfg.qa, bank, cfg.seed);
        stats.merge(s);
        items.extend(apply_ambiguity_filters(generated, &artifacts.scene, &ctx.census));
    }
    report.qa_candidates = items.len();
    report.rejected = stats.rejected;
    SceneResult { report, items, artifacts: Some(artifacts) }
}

/// Trace records for every supported item, in item order, one per style.
pub fn cot_for_items(
    items: &[QAItem],
    artifacts: &BTreeMap<String, &SceneArtifacts>,
    cfg: &PipelineConfig,
) -> Vec<CotRecord> {
    items
        .par_iter()
        .filter(|it| SUPPORTED_TASKS.contains(&it.task.as_str()))
        .flat_map_iter(|it| {
            let a = artifacts.get(&it.scene_id.0);
            let s_min = a
                .and_then(|a| set_index(it).and_then(|i| a.sets.get(i)))
                .map_or(cfg.selection.image_sets.s_min, |s| s.s_min);
            cfg.cot.styles.iter().map(move |style| match a {
                Some(a) => {
                    let r =
                        build_trace(it, &a.scene, &a.visibility, Some((&a.graph, s_min)), &cfg.qa, &cfg.cot, *style);
                    trace_record(it, *style, r)
                }
                None => trace_record(it, *style, Err(CotError::EntityMissing(it.scene_id.0.clone()))),
            })
        })
        .collect()
}

fn set_index(item: &QAItem) -> Option<usize> {
    item.image_set_id.strip_prefix('s').and_then(|s| s.parse().ok())
}

/// Re-derives each item against its scene; returns (qa_id, violation).
pub fn revalidate_items(
    items: &[QAItem],
    artifacts: &BTreeMap<String, &SceneArtifacts>,
    params: &QaParams,
) -> Vec<(String, String)> {
    items
        .par_iter()
        .flat_map_iter(|it| {
            let Some(a) = artifacts.get(&it.scene_id.0) else {
                return vec![(it.qa_id.clone(), format!("unknown scene {}", it.scene_id))];
            };
            let set_frames = set_index(it).and_then(|i| a.sets.get(i)).map(|s| s.frame_ids.clone()).unwrap_or_default();
            revalidate_item(it, &a.scene, &set_frames, params, &a.visibility)
                .into_iter()
                .map(|v| (it.qa_id.clone(), v.to_string()))
                .collect()
        })
        .collect()
}

/// Runs every stage on in-memory scenes. Scene order and thread count do
/// not affect the output. `failures` are reports for scenes that could not
/// be loaded.
pub fn run_on_scenes(
    mut scenes: Vec<Scene>,
    failures: Vec<SceneReport>,
    cfg: &PipelineConfig,
    bank: &TemplateBank,
) -> Result<PipelineOutput, IoError> {
    let start = Instant::now();
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    if let Some(w) = scenes.windows(2).find(|w| w[0].scene_id == w[1].scene_id) {
        return Err(IoError::Invariant { file: w[0].scene_id.0.clone(), message: "duplicate scene_id".into() });
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| IoError::Config(e.to_string()))?;
    pool.install(|| run_stages(scenes, failures, cfg, bank, start))
}

fn run_stages(
    scenes: Vec<Scene>,
    failures: Vec<SceneReport>,
    cfg: &PipelineConfig,
    bank: &TemplateBank,
    start: Instant,
) -> Result<PipelineOutput, IoError> {
    let results: Vec<SceneResult> = scenes.into_par_iter().map(|s| process_scene(s, cfg, bank)).collect();

    let mut reports: Vec<SceneReport> = Vec::new();
    let mut candidates = Vec::new();
    let mut artifacts: Vec<SceneArtifacts> = Vec::new();
    for r in results {
        reports.push(r.report);
        candidates.extend(r.items);
        artifacts.extend(r.artifacts);
    }
    reports.extend(failures);
    reports.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let by_scene: BTreeMap<String, &SceneArtifacts> =
        artifacts.iter().map(|a| (a.scene.scene_id.0.clone(), a)).collect();

    let mut items =
        balance_sample(candidates, &cfg.balance, bank, cfg.seed).map_err(|e| IoError::Config(e.to_string()))?;
    let mut revalidation_failures = 0;
    if cfg.output.revalidate {
        let bad: BTreeSet<String> =
            revalidate_items(&items, &by_scene, &cfg.qa).into_iter().map(|(id, _)| id).collect();
        revalidation_failures = bad.len();
        items.retain(|i| !bad.contains(&i.qa_id));
    }

    let cot = if cfg.cot.enabled { cot_for_items(&items, &by_scene, cfg) } else { Vec::new() };
    let variants = if cfg.output.emit_variants { make_circular_variants(&items) } else { Vec::new() };
    let sets: Vec<ImageSetRecord> = artifacts
        .iter()
        .flat_map(|a| {
            a.sets.iter().enumerate().map(|(i, s)| ImageSetRecord {
                scene_id: a.scene.scene_id.0.clone(),
                image_set_id: format!("s{i}"),
                kind: s.kind,
                frame_ids: s.frame_ids.clone(),
                s_min: s.s_min,
            })
        })
        .collect();

    let mut qa_by_capability: BTreeMap<String, usize> = BTreeMap::new();
    let mut cot_drop_reasons: BTreeMap<String, usize> = BTreeMap::new();
    for r in &mut reports {
        for it in items.iter().filter(|i| i.scene_id.0 == r.scene_id) {
            *r.qa_emitted.entry(it.capability.label().to_owned()).or_default() += 1;
        }
    }
    for it in &items {
        *qa_by_capability.entry(it.capability.label().to_owned()).or_default() += 1;
    }
    let scene_of: BTreeMap<&str, &str> = items.iter().map(|i| (i.qa_id.as_str(), i.scene_id.0.as_str())).collect();
    for c in &cot {
        let scene = scene_of[c.qa_id.as_str()];
        let r = reports.iter_mut().find(|r| r.scene_id == scene).expect("scene report");
        if c.dropped {
            r.cot_dropped += 1;
            let reason = c.reason.as_deref().unwrap_or("").split(':').next().unwrap_or("").to_owned();
            *cot_drop_reasons.entry(reason).or_default() += 1;
        } else {
            r.cot_emitted += 1;
        }
    }
    let files = BTreeMap::from([
        ("qa.jsonl".to_owned(), items.len()),
        ("cot.jsonl".to_owned(), cot.len()),
        ("variants.jsonl".to_owned(), variants.len()),
        ("image_sets.jsonl".to_owned(), sets.len()),
    ]);
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: cfg.seed,
        failed_scenes: reports.iter().filter(|r| r.failed).count(),
        scenes: reports,
        files,
        qa_by_capability,
        cot_drop_reasons,
        revalidation_failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(PipelineOutput { items, cot, variants, sets, manifest })
}

/// Scene files (`*.json`) in a directory, sorted by file name.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| IoError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every scene in `dir`; unreadable or invalid files become failed
/// scene reports.
pub fn ingest_dir(dir: &Path) -> Result<(Vec<Scene>, Vec<SceneReport>), IoError> {
    let mut scenes = Vec::new();
    let mut failures = Vec::new();
    for path in scene_files(dir)? {
        match ingest_scene(&path) {
            Ok(s) => scenes.push(s),
            Err(e) => {
                log::warn!("{e}");
                failures.push(SceneReport {
                    scene_id: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                    failed: true,
                    error: Some(e.to_string()),
                    ..Default::default()
                })
            }
        }
    }
    Ok((scenes, failures))
}

pub fn load_bank(cfg: &PipelineConfig) -> Result<TemplateBank, IoError> {
    match &cfg.paths.templates_dir {
        Some(d) => TemplateBank::with_overrides(d).map_err(|e| IoError::Config(e.to_string())),
        None => Ok(TemplateBank::default()),
    }
}

pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    write_jsonl(&dir.join("qa.jsonl"), QA_SCHEMA, &out.items)?;
    write_jsonl(&dir.join("cot.jsonl"), COT_SCHEMA, &out.cot)?;
    write_jsonl(&dir.join("variants.jsonl"), VARIANT_SCHEMA, &out.variants)?;
    write_jsonl(&dir.join("image_sets.jsonl"), SETS_SCHEMA, &out.sets)?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| IoError::io(&path, e))
}

/// Reads scenes from `paths.scenes_dir`, runs, and writes to
/// `paths.output_dir` (manifest last).
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, IoError> {
    let scenes_dir =
        cfg.paths.scenes_dir.as_deref().ok_or_else(|| IoError::Config("paths.scenes_dir is not set".into()))?;
    let out_dir =
        cfg.paths.output_dir.as_deref().ok_or_else(|| IoError::Config("paths.output_dir is not set".into()))?;
    let bank = load_bank(cfg)?;
    let (scenes, failures) = ingest_dir(scenes_dir)?;
    let out = run_on_scenes(scenes, failures, cfg, &bank)?;
    write_outputs(&out, out_dir)?;
    Ok(out)
}
