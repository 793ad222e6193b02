#![allow(dead_code)]

use std::collections::BTreeMap;

use spatial_qa::io::pipeline::{prepare_scene, run_on_scenes, PipelineOutput, SceneArtifacts};
use spatial_qa::io::PipelineConfig;
use spatial_qa::qa::TemplateBank;
use spatial_qa::scene::Scene;
use spatial_qa::synth::{synth_scene, SynthConfig};

pub const CORPUS_SEED: u64 = 7;

/// Three synthetic rooms; the third holds two instances of one category.
pub fn corpus_scenes() -> Vec<Scene> {
    (0..3)
        .map(|i| {
            let cfg = SynthConfig { duplicate_category: i == 2, ..Default::default() };
            synth_scene(&format!("room{i:02}"), &cfg, CORPUS_SEED)
        })
        .collect()
}

pub fn corpus_config() -> PipelineConfig {
    PipelineConfig { seed: CORPUS_SEED, ..Default::default() }
}

pub fn run_corpus(cfg: &PipelineConfig) -> PipelineOutput {
    run_on_scenes(corpus_scenes(), vec![], cfg, &TemplateBank::default()).expect("pipeline runs")
}

/// Re-runs the per-scene preparation stages (deterministic in the seed).
pub fn corpus_artifacts(cfg: &PipelineConfig) -> Vec<SceneArtifacts> {
    corpus_scenes()
        .into_iter()
        .map(|s| prepare_scene(s, cfg).map_err(|r| r.error).expect("scene prepares").artifacts)
        .collect()
}

pub fn by_scene(artifacts: &[SceneArtifacts]) -> BTreeMap<String, &SceneArtifacts> {
    artifacts.iter().map(|a| (a.scene.scene_id.0.clone(), a)).collect()
}
