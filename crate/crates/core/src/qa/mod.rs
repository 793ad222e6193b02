//! Question-answer generation with geometric ground truth.
//!
//! Every item carries a structured [`Derivation`] naming the scene entities
//! and intermediate quantities behind its answer, so the answer can be
//! recomputed from the scene alone (see [`derive`]).

pub mod derive;
pub mod distractors;
pub mod filter;
pub mod generate;
pub mod motion;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlanarOffset, Quadrant, Sector};
use crate::scene::{Frame, FrameId, ObjectId, PointId, Scene, SceneId, SceneObject};
use crate::selection::ImageSet;
use crate::visibility::{FrameVisibility, ObjectSide, VisibilityRecord};

pub use derive::{expected_answer, revalidate_item, Expected, Violation};
pub use distractors::{make_distractors, DistractorPolicy};
pub use filter::{apply_ambiguity_filters, balance_sample, BalanceCaps};
pub use generate::{generate_for_set, GenerationStats};
pub use motion::{CameraMotion, MotionLabel};
pub use templates::{TemplateBank, TemplateError};

pub const ALL_TEMPLATES: [&str; 14] = [
    "mm_camera_distance",
    "mm_pair_distance",
    "mm_object_height",
    "mm_object_length",
    "mm_scene_size",
    "sr_ego_direction",
    "sr_vertical",
    "sr_near_far",
    "sr_large_small",
    "mr_visible_side",
    "pt_point_correspondence",
    "pt_object_correspondence",
    "pt_camera_motion",
    "pt_allocentric",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QaError {
    #[error("need {needed} distractors, only {available} available")]
    InsufficientDistractors { needed: usize, available: usize },
    #[error("no point or instance is visible in two frames of the set")]
    InsufficientCorrespondence,
    #[error("anchor and facing target are {0:.3} m apart")]
    DegenerateAnchor(f64),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Capability {
    #[serde(rename = "MM")]
    Mm,
    #[serde(rename = "SR")]
    Sr,
    #[serde(rename = "MR")]
    Mr,
    #[serde(rename = "PT_Correspondence")]
    PtCorrespondence,
    #[serde(rename = "PT_CameraMotion")]
    PtCameraMotion,
    #[serde(rename = "PT_Allocentric")]
    PtAllocentric,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::Mm,
        Capability::Sr,
        Capability::Mr,
        Capability::PtCorrespondence,
        Capability::PtCameraMotion,
        Capability::PtAllocentric,
    ];

    pub fn of_template(template: &str) -> Option<Capability> {
        Some(match template {
            t if t.starts_with("mm_") => Capability::Mm,
            t if t.starts_with("sr_") => Capability::Sr,
            t if t.starts_with("mr_") => Capability::Mr,
            "pt_point_correspondence" | "pt_object_correspondence" => Capability::PtCorrespondence,
            "pt_camera_motion" => Capability::PtCameraMotion,
            "pt_allocentric" => Capability::PtAllocentric,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Capability::Mm => "MM",
            Capability::Sr => "SR",
            Capability::Mr => "MR",
            Capability::PtCorrespondence => "PT_Correspondence",
            Capability::PtCameraMotion => "PT_CameraMotion",
            Capability::PtAllocentric => "PT_Allocentric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Mcq,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "m2")]
    SquareMeters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericAnswer {
    /// Rounded to 0.1.
    pub value: f64,
    pub unit: Unit,
}

/// How the question text points at objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// By category name; the category must be unique among visible objects.
    ByName,
    /// By a visual mark (box or pixel) only.
    ByMark,
    /// No object is referenced.
    NoObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeAxis {
    /// Full extent along the object's local z axis.
    Height,
    /// Largest full extent.
    Longest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalRelation {
    Above,
    Below,
}

impl VerticalRelation {
    pub fn label(&self) -> &'static str {
        match self {
            VerticalRelation::Above => "above",
            VerticalRelation::Below => "below",
        }
    }
}

/// Entities and intermediate quantities an answer was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Derivation {
    CameraDistance {
        frame_id: FrameId,
        object_id: ObjectId,
        meters: f64,
    },
    PairDistance {
        a: ObjectId,
        b: ObjectId,
        meters: f64,
    },
    ObjectSize {
        object_id: ObjectId,
        axis: SizeAxis,
        meters: f64,
    },
    SceneSize {
        objects: usize,
        square_meters: f64,
    },
    /// Offset of `b` from `a` in the camera frame of `frame_id`.
    EgoDirection {
        frame_id: FrameId,
        a: ObjectId,
        b: ObjectId,
        offset: PlanarOffset,
        sector: Sector,
    },
    /// `gap_m` is the clearance between the boxes' vertical extents.
    Vertical {
        a: ObjectId,
        b: ObjectId,
        gap_m: f64,
        relation: VerticalRelation,
    },
    NearFar {
        frame_id: FrameId,
        a: ObjectId,
        b: ObjectId,
        dist_a: f64,
        dist_b: f64,
        closer: ObjectId,
    },
    LargeSmall {
        a: ObjectId,
        b: ObjectId,
        volume_a: f64,
        volume_b: f64,
        larger: ObjectId,
    },
    /// `gap` is the alignment lead of the best face over the runner-up.
    VisibleSide {
        frame_id: FrameId,
        object_id: ObjectId,
        side: ObjectSide,
        gap: f64,
    },
    /// `options` lists the point behind each option, in option order.
    PointCorrespondence {
        frame_a: FrameId,
        frame_b: FrameId,
        point_id: PointId,
        pixel_a: [f64; 2],
        options: Vec<PointId>,
    },
    /// `options` lists the object behind each option, in option order.
    ObjectCorrespondence {
        frame_a: FrameId,
        frame_b: FrameId,
        object_a: ObjectId,
        options: Vec<ObjectId>,
    },
    CameraMotion {
        frame_a: FrameId,
        frame_b: FrameId,
        motion: CameraMotion,
        labels: Vec<MotionLabel>,
    },
    /// Offset of `c` in the frame standing at `a` facing `b`.
    Allocentric {
        a: ObjectId,
        b: ObjectId,
        c: ObjectId,
        offset: PlanarOffset,
        quadrant: Quadrant,
    },
}

impl Derivation {
    /// Whether the recorded classifier output was ambiguous.
    pub fn is_ambiguous(&self) -> bool {
        matches!(
            self,
            Derivation::EgoDirection { sector: Sector::Ambiguous, .. }
                | Derivation::Allocentric { quadrant: Quadrant::Ambiguous, .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub qa_id: String,
    pub capability: Capability,
    pub task: String,
    /// Question stem without options.
    pub question: String,
    pub answer_kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_answer: Option<NumericAnswer>,
    pub scene_id: SceneId,
    pub image_set_id: String,
    pub frame_ids: Vec<FrameId>,
    pub object_ids: Vec<ObjectId>,
    pub reference: Reference,
    pub slots: BTreeMap<String, String>,
    pub paraphrase: usize,
    pub derivation: Derivation,
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub no_vision: bool,
}

pub const OPTION_LETTERS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

impl QAItem {
    /// Question stem followed by lettered options (MCQ only).
    pub fn render_prompt(&self) -> String {
        if self.options.is_empty() {
            return self.question.clone();
        }
        let opts: Vec<String> =
            self.options.iter().enumerate().map(|(i, o)| format!("{}. {}", OPTION_LETTERS[i], o)).collect();
        format!("{}\nOptions: {}", self.question, opts.join(", "))
    }

    pub fn correct_option(&self) -> Option<&str> {
        self.correct_index.and_then(|i| self.options.get(i)).map(String::as_str)
    }

    /// Objects named in the question text.
    pub fn named_objects(&self) -> &[ObjectId] {
        match self.reference {
            Reference::ByName => &self.object_ids,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapabilityToggles {
    pub mm: bool,
    pub sr: bool,
    pub mr: bool,
    pub pt_correspondence: bool,
    pub pt_camera_motion: bool,
    pub pt_allocentric: bool,
}

impl Default for CapabilityToggles {
    fn default() -> Self {
        CapabilityToggles {
            mm: true,
            sr: true,
            mr: true,
            pt_correspondence: true,
            pt_camera_motion: true,
            pt_allocentric: true,
        }
    }
}

impl CapabilityToggles {
    pub fn enabled(&self, c: Capability) -> bool {
        match c {
            Capability::Mm => self.mm,
            Capability::Sr => self.sr,
            Capability::Mr => self.mr,
            Capability::PtCorrespondence => self.pt_correspondence,
            Capability::PtCameraMotion => self.pt_camera_motion,
            Capability::PtAllocentric => self.pt_allocentric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaParams {
    /// Directional items within this angle of a boundary are rejected.
    pub margin_deg: f64,
    /// Near-far and large-small pairs need at least this ratio.
    pub min_ratio_gap: f64,
    pub tau_t_m: f64,
    pub tau_r_deg: f64,
    /// Camera-motion items with a component within this fraction of its
    /// threshold are rejected.
    pub motion_band: f64,
    /// Visible-side items need this lead of the best face over the next.
    pub side_min_gap: f64,
    /// Point-correspondence option separation at 640 px image width.
    pub point_min_sep_px: f64,
    pub min_anchor_m: f64,
    /// Vertical overlap tolerated when calling one box above another.
    pub vertical_tolerance_m: f64,
    /// Emit metric items as four-option MCQ instead of free numbers.
    pub numeric_as_mcq: bool,
    pub capabilities: CapabilityToggles,
}

impl Default for QaParams {
    fn default() -> Self {
        QaParams {
            margin_deg: crate::geometry::DEFAULT_MARGIN_DEG,
            min_ratio_gap: 1.15,
            tau_t_m: 0.2,
            tau_r_deg: 10.0,
            motion_band: 0.1,
            side_min_gap: 0.1,
            point_min_sep_px: 30.0,
            min_anchor_m: 0.2,
            vertical_tolerance_m: 0.02,
            numeric_as_mcq: false,
            capabilities: CapabilityToggles::default(),
        }
    }
}

/// Everything generation needs to know about one image set.
pub struct SetContext<'a> {
    pub scene: &'a Scene,
    pub set_index: usize,
    pub set: &'a ImageSet,
    pub frames: Vec<&'a Frame>,
    pub visibility: &'a BTreeMap<FrameId, FrameVisibility>,
    /// Objects passing the object filter, per frame of the set.
    pub kept: BTreeMap<FrameId, BTreeSet<ObjectId>>,
    /// Visible instances per lowercased category across the set.
    pub census: BTreeMap<String, BTreeSet<ObjectId>>,
}

impl<'a> SetContext<'a> {
    pub fn new(
        scene: &'a Scene,
        set_index: usize,
        set: &'a ImageSet,
        visibility: &'a BTreeMap<FrameId, FrameVisibility>,
        kept: &BTreeMap<FrameId, BTreeSet<ObjectId>>,
    ) -> Self {
        let frames: Vec<&Frame> = set.frame_ids.iter().filter_map(|f| scene.frame(f)).collect();
        let kept = set.frame_ids.iter().map(|f| (f.clone(), kept.get(f).cloned().unwrap_or_default())).collect();
        let census = category_census(scene, &set.frame_ids, visibility);
        SetContext { scene, set_index, set, frames, visibility, kept, census }
    }

    pub fn image_set_id(&self) -> String {
        format!("s{}", self.set_index)
    }

    /// 1-based position of a frame among the set's images.
    pub fn image_number(&self, frame: &FrameId) -> usize {
        self.set.frame_ids.iter().position(|f| f == frame).map_or(0, |i| i + 1)
    }

    pub fn record(&self, frame: &FrameId, object: &ObjectId) -> Option<&'a VisibilityRecord> {
        self.visibility.get(frame).and_then(|v| v.records.get(object))
    }

    pub fn kept_in(&self, frame: &FrameId) -> impl Iterator<Item = &SceneObject> + '_ {
        self.kept.get(frame).into_iter().flatten().filter_map(|o| self.scene.object(o))
    }

    /// Kept objects that may be referred to by name.
    pub fn nameable_in(&self, frame: &FrameId) -> Vec<&'a SceneObject> {
        let scene: &'a Scene = self.scene;
        self.kept
            .get(frame)
            .into_iter()
            .flatten()
            .filter_map(|o| scene.object(o))
            .filter(|o| self.is_nameable(o))
            .collect()
    }

    /// Objects kept in at least one frame of the set and nameable.
    pub fn nameable_anywhere(&self) -> Vec<&'a SceneObject> {
        let ids: BTreeSet<&ObjectId> = self.kept.values().flatten().collect();
        let scene: &'a Scene = self.scene;
        scene.objects.iter().filter(|o| ids.contains(&o.object_id) && self.is_nameable(o)).collect()
    }

    pub fn is_nameable(&self, o: &SceneObject) -> bool {
        self.census.get(&o.category.to_lowercase()).is_some_and(|s| s.len() == 1 && s.contains(&o.object_id))
    }

    pub fn image_refs(&self) -> Vec<String> {
        self.frames.iter().filter_map(|f| f.image_ref.clone()).collect()
    }
}

/// Objects with any visible part in the given frames, by lowercased category.
pub fn category_census(
    scene: &Scene,
    frames: &[FrameId],
    visibility: &BTreeMap<FrameId, FrameVisibility>,
) -> BTreeMap<String, BTreeSet<ObjectId>> {
    let mut census: BTreeMap<String, BTreeSet<ObjectId>> = BTreeMap::new();
    for f in frames {
        let Some(v) = visibility.get(f) else { continue };
        for r in v.records.values() {
            if r.visible_ratio > 0.0 && r.is_visible() {
                if let Some(o) = scene.object(&r.object_id) {
                    census.entry(o.category.to_lowercase()).or_default().insert(o.object_id.clone());
                }
            }
        }
    }
    census
}
