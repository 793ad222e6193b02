use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use spatial_qa::cot::CotStyle;
use spatial_qa::eval::{
    aggregate_report, make_circular_variants, radar_csv, report_csv, strip_vision, MetricReport, PredictionRecord,
    ScoreInputs,
};
use spatial_qa::io::jsonl::{read_jsonl, write_jsonl, COT_SCHEMA, PREDICTION_SCHEMA, QA_SCHEMA, VARIANT_SCHEMA};
use spatial_qa::io::pipeline::{
    cot_for_items, ingest_dir, prepare_scene, revalidate_items, run_pipeline, scene_files, ImageSetRecord,
    SceneArtifacts, SETS_SCHEMA,
};
use spatial_qa::io::{ingest_scene, IoError, PipelineConfig, EXIT_FATAL, EXIT_INVALID_INPUT, EXIT_OK, EXIT_PARTIAL};
use spatial_qa::qa::QAItem;

#[derive(Parser)]
#[command(name = "spatial-qa", version, about = "Spatial QA synthesis, reasoning traces and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set qa.margin_deg=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl ConfigArgs {
    fn load(&self, extra: Vec<(String, String)>) -> Result<PipelineConfig, IoError> {
        let mut ov = Vec::new();
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| IoError::Config(format!("override `{o}` needs KEY=VALUE")))?;
            ov.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        if let Some(s) = self.seed {
            ov.push(("seed".into(), s.to_string()));
        }
        if let Some(t) = self.threads {
            ov.push(("threads".into(), t.to_string()));
        }
        ov.extend(extra);
        PipelineConfig::load(self.config.as_deref(), &ov)
    }
}

fn path_override(key: &str, p: &Option<PathBuf>) -> Option<(String, String)> {
    p.as_ref().map(|p| (key.to_owned(), format!("{:?}", p.display().to_string())))
}

#[derive(Subcommand)]
enum Command {
    /// Loads and validates scene files; with --qa, re-derives every item.
    IngestValidate {
        /// Scene files or directories of scene files.
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        qa: Option<PathBuf>,
        /// Image-set file from the same run, to check frame membership.
        #[arg(long)]
        sets: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Runs the full pipeline and writes QA, CoT, variant and manifest files.
    Generate {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        no_cot: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Builds reasoning traces for an existing QA file.
    Cot {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        style: Vec<StyleArg>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Writes every cyclic option rotation of each choice item.
    EmitCircular {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes the items with image references removed.
    StripVision {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores prediction files and writes a JSON report and a task CSV.
    Score {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        variant_predictions: Option<PathBuf>,
        #[arg(long)]
        no_vision_predictions: Option<PathBuf>,
        /// Comma-separated MRA thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Combines per-model reports into a normalized radar CSV.
    Report {
        /// `name=report.json`, one per model.
        #[arg(long = "model", value_name = "NAME=PATH", required = true)]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum StyleArg {
    Procedural,
    Grid,
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

fn load_scene_args(paths: &[PathBuf]) -> Result<(Vec<spatial_qa::scene::Scene>, Vec<String>), IoError> {
    let mut scenes = Vec::new();
    let mut failures = Vec::new();
    for p in paths {
        let files = if p.is_dir() { scene_files(p)? } else { vec![p.clone()] };
        for f in files {
            match ingest_scene(&f) {
                Ok(s) => {
                    info!("{}: {} frames, {} objects", s.scene_id, s.frames.len(), s.objects.len());
                    scenes.push(s);
                }
                Err(e @ IoError::Io { .. }) => return Err(e),
                Err(e) => {
                    error!("{e}");
                    failures.push(e.to_string());
                }
            }
        }
    }
    Ok((scenes, failures))
}

fn prepare_all(scenes: Vec<spatial_qa::scene::Scene>, cfg: &PipelineConfig) -> Vec<SceneArtifacts> {
    scenes
        .into_iter()
        .filter_map(|s| match prepare_scene(s, cfg) {
            Ok(p) => Some(p.artifacts),
            Err(r) => {
                warn!("{}: {}", r.scene_id, r.error.unwrap_or_default());
                None
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<i32, IoError> {
    match cli.command {
        Command::IngestValidate { scenes, qa, sets, cfg } => {
            let cfg = cfg.load(vec![])?;
            let (loaded, failures) = load_scene_args(&scenes)?;
            println!("{} scene(s) valid, {} invalid", loaded.len(), failures.len());
            if !failures.is_empty() {
                return Ok(EXIT_INVALID_INPUT);
            }
            let Some(qa) = qa else { return Ok(EXIT_OK) };
            let items: Vec<QAItem> = read_jsonl(&qa, QA_SCHEMA)?;
            let mut artifacts = prepare_all(loaded, &cfg);
            if let Some(sets) = sets {
                let records: Vec<ImageSetRecord> = read_jsonl(&sets, SETS_SCHEMA)?;
                for a in &mut artifacts {
                    for r in records.iter().filter(|r| r.scene_id == a.scene.scene_id.0) {
                        let idx: usize = r.image_set_id.trim_start_matches('s').parse().unwrap_or(usize::MAX);
                        if let Some(s) = a.sets.get_mut(idx) {
                            s.frame_ids = r.frame_ids.clone();
                        }
                    }
                }
            }
            let by_scene: BTreeMap<String, &SceneArtifacts> =
                artifacts.iter().map(|a| (a.scene.scene_id.0.clone(), a)).collect();
            let violations = revalidate_items(&items, &by_scene, &cfg.qa);
            for (id, v) in &violations {
                println!("{id}: {v}");
            }
            println!("{} item(s) checked, {} violation(s)", items.len(), violations.len());
            Ok(if violations.is_empty() { EXIT_OK } else { EXIT_INVALID_INPUT })
        }
        Command::Generate { scenes, out, templates, no_cot, cfg } => {
            let mut extra: Vec<(String, String)> = [
                path_override("paths.scenes_dir", &scenes),
                path_override("paths.output_dir", &out),
                path_override("paths.templates_dir", &templates),
            ]
            .into_iter()
            .flatten()
            .collect();
            if no_cot {
                extra.push(("cot.enabled".into(), "false".into()));
            }
            let cfg = cfg.load(extra)?;
            let out = run_pipeline(&cfg)?;
            let m = &out.manifest;
            println!(
                "{} item(s), {} trace record(s), {} variant(s); {} scene(s) failed; {:.2}s",
                out.items.len(),
                out.cot.len(),
                out.variants.len(),
                m.failed_scenes,
                m.wall_time_s
            );
            Ok(out.exit_code())
        }
        Command::Cot { qa, scenes, out, style, cfg } => {
            let mut cfg = cfg.load(vec![])?;
            if !style.is_empty() {
                cfg.cot.styles = style
                    .iter()
                    .map(|s| match s {
                        StyleArg::Procedural => CotStyle::Procedural,
                        StyleArg::Grid => CotStyle::Grid,
                    })
                    .collect();
            }
            let items: Vec<QAItem> = read_jsonl(&qa, QA_SCHEMA)?;
            let (loaded, failures) = ingest_dir(&scenes)?;
            let artifacts = prepare_all(loaded, &cfg);
            let by_scene: BTreeMap<String, &SceneArtifacts> =
                artifacts.iter().map(|a| (a.scene.scene_id.0.clone(), a)).collect();
            let records = cot_for_items(&items, &by_scene, &cfg);
            let dropped = records.iter().filter(|r| r.dropped).count();
            write_jsonl(&out, COT_SCHEMA, &records)?;
            println!("{} trace record(s), {} dropped", records.len(), dropped);
            Ok(if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::EmitCircular { qa, out } => {
            let items: Vec<QAItem> = read_jsonl(&qa, QA_SCHEMA)?;
            let variants = make_circular_variants(&items);
            write_jsonl(&out, VARIANT_SCHEMA, &variants)?;
            println!("{} variant(s)", variants.len());
            Ok(EXIT_OK)
        }
        Command::StripVision { qa, out } => {
            let items: Vec<QAItem> = read_jsonl(&qa, QA_SCHEMA)?;
            write_jsonl(&out, QA_SCHEMA, &strip_vision(&items))?;
            println!("{} item(s)", items.len());
            Ok(EXIT_OK)
        }
        Command::Score { qa, predictions, variant_predictions, no_vision_predictions, thresholds, out, csv } => {
            let items: Vec<QAItem> = read_jsonl(&qa, QA_SCHEMA)?;
            let load = |p: &Path| read_jsonl::<PredictionRecord>(p, PREDICTION_SCHEMA);
            let inputs = ScoreInputs {
                predictions: load(&predictions)?,
                variant_predictions: variant_predictions.as_deref().map(load).transpose()?,
                no_vision_predictions: no_vision_predictions.as_deref().map(load).transpose()?,
                thresholds: thresholds.as_deref(),
            };
            let report = aggregate_report(&items, &inputs)
                .map_err(|e| IoError::Invariant { file: predictions.display().to_string(), message: e.to_string() })?;
            for w in &report.warnings {
                warn!("{w}");
            }
            write_text(&out, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
            if let Some(c) = csv {
                write_text(&c, &report_csv(&report))?;
            }
            println!("overall {:.4} over {} task(s)", report.overall, report.tasks.len());
            Ok(EXIT_OK)
        }
        Command::Report { models, out } => {
            let mut reports: BTreeMap<String, MetricReport> = BTreeMap::new();
            for m in &models {
                let (name, path) =
                    m.split_once('=').ok_or_else(|| IoError::Config(format!("`{m}` needs NAME=PATH")))?;
                let path = Path::new(path);
                let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
                let report: MetricReport = serde_json::from_str(&text).map_err(|e| IoError::Schema {
                    file: path.display().to_string(),
                    field: String::new(),
                    line: Some(e.line()),
                    message: e.to_string(),
                })?;
                reports.insert(name.to_owned(), report);
            }
            write_text(&out, &radar_csv(&reports))?;
            println!("{} model(s)", reports.len());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            match e {
                IoError::Io { .. } => EXIT_FATAL,
                other => other.exit_code(),
            }
        }
    };
    ExitCode::from(code as u8)
}
