//! Pipeline configuration: TOML with defaults, dotted-key overrides, range
//! validation and a stable hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;
use crate::cot::CotParams;
use crate::qa::{BalanceCaps, QaParams};
use crate::selection::{AssociationMode, CoverageParams, ImageSetParams, ObjectFilterRules, PoseFilterLimits};
use crate::visibility::OcclusionPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationChoice {
    /// Point overlap when the scene has points, shared objects otherwise.
    #[default]
    Auto,
    PointOverlap,
    SharedObjects,
}

impl AssociationChoice {
    pub fn resolve(&self, has_points: bool) -> AssociationMode {
        match self {
            AssociationChoice::Auto if has_points => AssociationMode::PointOverlap,
            AssociationChoice::Auto => AssociationMode::SharedObjects,
            AssociationChoice::PointOverlap => AssociationMode::PointOverlap,
            AssociationChoice::SharedObjects => AssociationMode::SharedObjects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub scenes_dir: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub association_mode: AssociationChoice,
    pub image_sets: ImageSetParams,
    /// Adds one coverage-selected set per scene.
    pub coverage_enabled: bool,
    pub coverage: CoverageParams,
    pub pose: PoseFilterLimits,
    pub objects: ObjectFilterRules,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            association_mode: AssociationChoice::Auto,
            image_sets: ImageSetParams::default(),
            coverage_enabled: true,
            coverage: CoverageParams::default(),
            pose: PoseFilterLimits::default(),
            objects: ObjectFilterRules::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub emit_variants: bool,
    /// Re-derives every item before writing and drops any that fail.
    pub revalidate: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { emit_variants: true, revalidate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; unset uses all cores. Outputs do not depend on it.
    pub threads: Option<usize>,
    pub paths: Paths,
    pub selection: SelectionConfig,
    pub occlusion: OcclusionPolicy,
    pub qa: QaParams,
    pub balance: BalanceCaps,
    pub cot: CotParams,
    pub output: OutputConfig,
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), IoError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| IoError::Config(format!("{key}: `{part}` is not a table")))?;
        if i + 1 == parts.len() {
            table.insert((*part).to_owned(), value);
            return Ok(());
        }
        cur = table.entry((*part).to_owned()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

/// TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

impl PipelineConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys), and
    /// validates.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self, IoError> {
        let mut value: toml::Value =
            toml::from_str::<toml::Table>(text).map(toml::Value::Table).map_err(|e| IoError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut value, k, parse_value(v))?;
        }
        let cfg: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, IoError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| IoError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form, thread count excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let mut errs: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_owned());
            }
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let s = &self.selection;
        check(s.image_sets.set_size >= 2, "selection.image_sets.set_size must be at least 2");
        check(s.image_sets.s_min >= 0.0, "selection.image_sets.s_min must be non-negative");
        check(s.image_sets.s_max >= s.image_sets.s_min, "selection.image_sets.s_max must be at least s_min");
        check(s.image_sets.max_sets >= 1, "selection.image_sets.max_sets must be at least 1");
        check(
            unit(s.coverage.rho_min) && unit(s.coverage.rho_max) && s.coverage.rho_min < s.coverage.rho_max,
            "selection.coverage needs 0 <= rho_min < rho_max <= 1",
        );
        check(s.coverage.n_min >= 1, "selection.coverage.n_min must be at least 1");
        check(
            s.pose.max_abs_pitch_deg > 0.0 && s.pose.max_abs_pitch_deg <= 90.0,
            "selection.pose.max_abs_pitch_deg must be in (0, 90]",
        );
        check(
            s.pose.max_abs_yaw_dev_deg > 0.0 && s.pose.max_abs_yaw_dev_deg <= 180.0,
            "selection.pose.max_abs_yaw_dev_deg must be in (0, 180]",
        );
        check(unit(s.objects.min_area_fraction), "selection.objects.min_area_fraction must be in [0, 1]");
        check(unit(s.objects.min_visible_ratio), "selection.objects.min_visible_ratio must be in [0, 1]");
        check(self.occlusion.downsample >= 1, "occlusion.downsample must be at least 1");
        check(self.occlusion.depth_slack_m >= 0.0, "occlusion.depth_slack_m must be non-negative");
        let q = &self.qa;
        check((0.0..45.0).contains(&q.margin_deg), "qa.margin_deg must be in [0, 45)");
        check(q.min_ratio_gap >= 1.0, "qa.min_ratio_gap must be at least 1");
        check(q.tau_t_m > 0.0 && q.tau_r_deg > 0.0, "qa.tau_t_m and qa.tau_r_deg must be positive");
        check((0.0..1.0).contains(&q.motion_band), "qa.motion_band must be in [0, 1)");
        check(q.side_min_gap >= 0.0, "qa.side_min_gap must be non-negative");
        check(q.point_min_sep_px >= 0.0, "qa.point_min_sep_px must be non-negative");
        check(q.min_anchor_m > 0.0, "qa.min_anchor_m must be positive");
        check(q.vertical_tolerance_m >= 0.0, "qa.vertical_tolerance_m must be non-negative");
        check(self.balance.per_template_per_set >= 1, "balance.per_template_per_set must be at least 1");
        check(self.balance.per_set_total >= 1, "balance.per_set_total must be at least 1");
        check(self.cot.dist_step_m > 0.0, "cot.dist_step_m must be positive");
        check(self.cot.angle_step_deg > 0.0, "cot.angle_step_deg must be positive");
        check(self.cot.grid_n >= 2, "cot.grid_n must be at least 2");
        check(!self.cot.enabled || !self.cot.styles.is_empty(), "cot.styles must not be empty when cot is enabled");
        check(self.threads != Some(0), "threads must be at least 1");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(IoError::Config(errs.join("; ")))
        }
    }
}
