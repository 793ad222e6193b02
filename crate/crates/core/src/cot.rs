//! Chain-of-thought traces built on a top-down cognitive map.
//!
//! A trace localizes the frames that show the queried objects, walks the
//! camera from one keyframe to the next, places cameras and objects on a
//! map anchored at the first keyframe, and reads the answer off the map.
//! The map is quantized, so the answer it yields is compared with the
//! item's ground truth; traces that disagree are dropped, never relabeled.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{classify_quadrant, classify_sector, wrap_deg_180, PlanarOffset, PlanarPose, Quadrant, Sector};
use crate::qa::motion::{describe_motion, CameraMotion, MotionLabel};
use crate::qa::{Derivation, QAItem, QaParams, OPTION_LETTERS};
use crate::scene::{FrameId, InstanceGroup, ObjectId, Scene, SceneObject};
use crate::selection::AssociationGraph;
use crate::visibility::{Box2D, FrameVisibility};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CotError {
    #[error("object {0} is visible in no frame of the item")]
    NoKeyframe(ObjectId),
    #[error("map has no entry for {0}")]
    EntityMissing(String),
    #[error("map-derived answer {derived} differs from ground truth {expected}")]
    QuantizationDisagreement { expected: String, derived: String },
    #[error("task {0} has no reasoning trace")]
    Unsupported(String),
}

impl CotError {
    pub fn reason(&self) -> &'static str {
        match self {
            CotError::NoKeyframe(_) => "no_keyframe",
            CotError::EntityMissing(_) => "entity_missing",
            CotError::QuantizationDisagreement { .. } => "quantization_disagreement",
            CotError::Unsupported(_) => "unsupported",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotStyle {
    Procedural,
    Grid,
}

impl CotStyle {
    pub fn label(&self) -> &'static str {
        match self {
            CotStyle::Procedural => "procedural",
            CotStyle::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CotParams {
    pub enabled: bool,
    pub styles: Vec<CotStyle>,
    pub dist_step_m: f64,
    pub angle_step_deg: f64,
    pub grid_n: usize,
}

impl Default for CotParams {
    fn default() -> Self {
        CotParams {
            enabled: true,
            styles: vec![CotStyle::Procedural],
            dist_step_m: 0.1,
            angle_step_deg: 5.0,
            grid_n: 10,
        }
    }
}

impl CotParams {
    pub fn quantization(&self) -> Quantization {
        Quantization { dist_step_m: self.dist_step_m, angle_step_deg: self.angle_step_deg }
    }
}

pub const SUPPORTED_TASKS: [&str; 3] = ["pt_allocentric", "sr_ego_direction", "sr_near_far"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub dist_step_m: f64,
    pub angle_step_deg: f64,
}

impl Quantization {
    pub fn dist(&self, v: f64) -> f64 {
        quantize(v, self.dist_step_m)
    }

    pub fn angle(&self, v: f64) -> f64 {
        wrap_deg_180(quantize(v, self.angle_step_deg))
    }
}

fn quantize(v: f64, step: f64) -> f64 {
    let q = (v / step).round() * step;
    // Keep 0.1-step values printable without float residue.
    let q = (q * 1e9).round() / 1e9;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Camera,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CogMapEntry {
    /// Frame id for cameras, object id for objects.
    pub entity: String,
    pub kind: EntityKind,
    /// Display label ("image 2", "chair").
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

impl CogMapEntry {
    pub fn pose(&self) -> PlanarPose {
        PlanarPose::new(self.x, self.y, self.heading_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CogMap {
    pub reference_frame: FrameId,
    pub entries: Vec<CogMapEntry>,
    pub quantization: Quantization,
}

impl CogMap {
    pub fn get(&self, kind: EntityKind, entity: &str) -> Option<&CogMapEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.entity == entity)
    }

    fn require(&self, kind: EntityKind, entity: &str) -> Result<&CogMapEntry, CotError> {
        self.get(kind, entity).ok_or_else(|| CotError::EntityMissing(entity.to_owned()))
    }

    /// Every entry moved by the 2D rigid motion `g` (entries are taken as
    /// local to `g`).
    pub fn transformed(&self, g: &PlanarPose) -> CogMap {
        let mut out = self.clone();
        for e in &mut out.entries {
            let p = g.compose(&e.pose());
            e.x = p.x;
            e.y = p.y;
            e.heading_deg = p.heading_deg;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub object_id: ObjectId,
    pub label: String,
    pub frame_id: FrameId,
    pub image: usize,
    pub bbox: Option<Box2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeStep {
    pub keyframes: Vec<FrameId>,
    pub images: Vec<usize>,
    pub groundings: Vec<Grounding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMotionStep {
    pub from: FrameId,
    pub to: FrameId,
    pub motion: CameraMotion,
    pub labels: Vec<MotionLabel>,
    pub description: String,
    /// Instance groups visible in both frames.
    pub shared: Vec<InstanceGroup>,
    /// Planar pose of `to` in the levelled frame of `from`.
    pub relative: PlanarPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerStep {
    pub task: String,
    /// Frame the relation is read in, expressed in map coordinates.
    pub anchor: PlanarPose,
    pub target: PlanarOffset,
    pub relation: String,
    pub letter: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TraceStep {
    Keyframe(KeyframeStep),
    PairwiseMotion { steps: Vec<PairwiseMotionStep> },
    MapUpdate { map: CogMap },
    Answer(AnswerStep),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTTrace {
    pub qa_id: String,
    pub steps: Vec<TraceStep>,
    pub rendered: String,
    pub final_answer: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    pub qa_id: String,
    pub style: CotStyle,
    pub text: String,
    pub final_answer: Option<String>,
    pub dropped: bool,
    pub reason: Option<String>,
}

/// Frame whose camera the question is asked from, if any.
fn viewpoint(qa: &QAItem) -> Option<&FrameId> {
    match &qa.derivation {
        Derivation::EgoDirection { frame_id, .. } | Derivation::NearFar { frame_id, .. } => Some(frame_id),
        _ => None,
    }
}

fn image_number(qa: &QAItem, frame: &FrameId) -> usize {
    qa.frame_ids.iter().position(|f| f == frame).map_or(0, |i| i + 1)
}

fn visible_record<'v>(
    visibility: &'v BTreeMap<FrameId, FrameVisibility>,
    frame: &FrameId,
    object: &ObjectId,
) -> Option<&'v crate::visibility::VisibilityRecord> {
    visibility.get(frame).and_then(|v| v.records.get(object)).filter(|r| r.is_visible())
}

/// Frames of the item in which any queried object is visible, plus the
/// question's viewpoint frame, in temporal order.
pub fn localize_keyframes(
    qa: &QAItem,
    scene: &Scene,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
) -> Result<Vec<FrameId>, CotError> {
    let mut frames: BTreeSet<FrameId> = BTreeSet::new();
    for o in &qa.object_ids {
        let seen: Vec<&FrameId> = qa.frame_ids.iter().filter(|f| visible_record(visibility, f, o).is_some()).collect();
        if seen.is_empty() {
            return Err(CotError::NoKeyframe(o.clone()));
        }
        frames.extend(seen.into_iter().cloned());
    }
    if let Some(f) = viewpoint(qa) {
        frames.insert(f.clone());
    }
    let mut out: Vec<FrameId> = frames.into_iter().collect();
    out.sort_by_key(|f| scene.frame(f).map_or(i64::MAX, |fr| fr.seq_index));
    Ok(out)
}

/// Keyframes joined by hop-shortest connector chains over edges scoring at
/// least `s_min` among the item's frames. Pairs with no chain are joined
/// directly.
pub fn connect_keyframes(
    keyframes: &[FrameId],
    item_frames: &[FrameId],
    graph: Option<(&AssociationGraph, f64)>,
) -> Vec<FrameId> {
    let allowed: BTreeSet<FrameId> = item_frames.iter().cloned().collect();
    let mut out: Vec<FrameId> = keyframes.first().cloned().into_iter().collect();
    for w in keyframes.windows(2) {
        let path = graph
            .and_then(|(g, s_min)| g.shortest_path(&w[0], &w[1], s_min, &allowed))
            .unwrap_or_else(|| vec![w[0].clone(), w[1].clone()]);
        out.extend(path.into_iter().skip(1));
    }
    out
}

/// One step per adjacent pair of `frames`, with the verbal motion and the
/// instance groups both frames show.
pub fn estimate_pairwise_motion(
    frames: &[FrameId],
    scene: &Scene,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
    qa_params: &QaParams,
    angle_step_deg: f64,
) -> Result<Vec<PairwiseMotionStep>, CotError> {
    let groups = |f: &FrameId| -> BTreeSet<InstanceGroup> {
        visibility
            .get(f)
            .map(|v| {
                v.records
                    .values()
                    .filter(|r| r.is_visible())
                    .filter_map(|r| scene.object(&r.object_id))
                    .map(|o| o.instance_group.clone())
                    .collect()
            })
            .unwrap_or_default()
    };
    frames
        .windows(2)
        .map(|w| {
            let a = scene.frame(&w[0]).ok_or_else(|| CotError::EntityMissing(w[0].to_string()))?;
            let b = scene.frame(&w[1]).ok_or_else(|| CotError::EntityMissing(w[1].to_string()))?;
            let motion = CameraMotion::between(&a.pose, &b.pose);
            let labels = motion.labels(qa_params.tau_t_m, qa_params.tau_r_deg);
            let description = describe_motion(&labels, Some((&motion, angle_step_deg)));
            let shared = groups(&w[0]).intersection(&groups(&w[1])).cloned().collect();
            let relative = PlanarPose::from_camera(&a.pose).relative(&PlanarPose::from_camera(&b.pose));
            Ok(PairwiseMotionStep {
                from: w[0].clone(),
                to: w[1].clone(),
                motion,
                labels,
                description,
                shared,
                relative,
            })
        })
        .collect()
}

/// World heading of an object's canonical front, CCW from world +y.
fn object_heading(o: &SceneObject) -> f64 {
    if !o.has_canonical_orientation {
        return 0.0;
    }
    let f = o.obb_rotation.apply(&crate::geometry::Vec3::y());
    if f.x.hypot(f.y) < 1e-9 {
        return 0.0;
    }
    (-f.x).atan2(f.y).to_degrees()
}

/// Builds the map: the first keyframe is the origin facing +y, later
/// keyframe cameras follow by accumulating the planar relative poses along
/// `steps`, and each object is placed from the keyframe where it appears
/// largest. Coordinates are quantized last.
pub fn build_cogmap(
    qa: &QAItem,
    keyframes: &[FrameId],
    steps: &[PairwiseMotionStep],
    scene: &Scene,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
    quant: Quantization,
) -> Result<(CogMap, Vec<Grounding>), CotError> {
    let reference = keyframes.first().ok_or_else(|| CotError::EntityMissing("keyframe".into()))?.clone();
    let mut placed: BTreeMap<FrameId, PlanarPose> = BTreeMap::from([(reference.clone(), PlanarPose::origin())]);
    let mut current = PlanarPose::origin();
    for s in steps {
        current = current.compose(&s.relative);
        placed.entry(s.to.clone()).or_insert(current);
    }

    let mut entries = Vec::new();
    for k in keyframes {
        let p = placed.get(k).ok_or_else(|| CotError::EntityMissing(k.to_string()))?;
        entries.push(CogMapEntry {
            entity: k.0.clone(),
            kind: EntityKind::Camera,
            label: format!("image {}", image_number(qa, k)),
            x: quant.dist(p.x),
            y: quant.dist(p.y),
            heading_deg: quant.angle(p.heading_deg),
        });
    }

    let mut groundings = Vec::new();
    for oid in &qa.object_ids {
        let o = scene.object(oid).ok_or_else(|| CotError::EntityMissing(oid.to_string()))?;
        let mut best: Option<(&FrameId, f64, Option<Box2D>)> = None;
        for k in keyframes {
            if let Some(r) = visible_record(visibility, k, oid) {
                if best.as_ref().is_none_or(|b| r.area_fraction > b.1) {
                    best = Some((k, r.area_fraction, r.visible_bbox));
                }
            }
        }
        let (k, _, bbox) = best.ok_or_else(|| CotError::NoKeyframe(oid.clone()))?;
        let frame = scene.frame(k).ok_or_else(|| CotError::EntityMissing(k.to_string()))?;
        let cam_world = PlanarPose::from_camera(&frame.pose);
        let local = cam_world.to_local(o.obb_center.x, o.obb_center.y);
        let map_cam = placed[k];
        let (x, y) = map_cam.to_parent(local);
        let heading = map_cam.heading_deg + object_heading(o) - cam_world.heading_deg;
        entries.push(CogMapEntry {
            entity: oid.0.clone(),
            kind: EntityKind::Object,
            label: o.display_name(),
            x: quant.dist(x),
            y: quant.dist(y),
            heading_deg: quant.angle(heading),
        });
        groundings.push(Grounding {
            object_id: oid.clone(),
            label: o.display_name(),
            frame_id: k.clone(),
            image: image_number(qa, k),
            bbox,
        });
    }
    Ok((CogMap { reference_frame: reference, entries, quantization: quant }, groundings))
}

fn disagreement(qa: &QAItem, derived: &str) -> CotError {
    CotError::QuantizationDisagreement {
        expected: qa.correct_option().unwrap_or_default().to_owned(),
        derived: derived.to_owned(),
    }
}

/// Re-centres the map on the question's reference frame, evaluates the
/// relation on quantized coordinates, and checks it against the item.
pub fn derive_answer_from_cogmap(map: &CogMap, qa: &QAItem, qa_params: &QaParams) -> Result<AnswerStep, CotError> {
    let obj = |id: &ObjectId| map.require(EntityKind::Object, id.as_str());
    let (anchor, target, relation) = match &qa.derivation {
        Derivation::Allocentric { a, b, c, .. } => {
            let (ea, eb, ec) = (obj(a)?, obj(b)?, obj(c)?);
            if (eb.x - ea.x).hypot(eb.y - ea.y) <= qa_params.min_anchor_m {
                return Err(disagreement(qa, "degenerate anchor"));
            }
            let anchor = PlanarPose::facing((ea.x, ea.y), (eb.x, eb.y));
            let target = anchor.to_local(ec.x, ec.y);
            let q = classify_quadrant(target, 0.0).map_err(|_| disagreement(qa, "degenerate offset"))?;
            if q == Quadrant::Ambiguous {
                return Err(disagreement(qa, "on an axis"));
            }
            (anchor, target, q.label().to_owned())
        }
        Derivation::EgoDirection { frame_id, a, b, .. } => {
            let cam = map.require(EntityKind::Camera, frame_id.as_str())?;
            let (ea, eb) = (obj(a)?, obj(b)?);
            let anchor = PlanarPose::new(ea.x, ea.y, cam.heading_deg);
            let target = anchor.to_local(eb.x, eb.y);
            let s = classify_sector(target, 0.0).map_err(|_| disagreement(qa, "degenerate offset"))?;
            if s == Sector::Ambiguous {
                return Err(disagreement(qa, "on a diagonal"));
            }
            (anchor, target, s.label().to_owned())
        }
        Derivation::NearFar { frame_id, a, b, .. } => {
            let cam = map.require(EntityKind::Camera, frame_id.as_str())?;
            let (ea, eb) = (obj(a)?, obj(b)?);
            let anchor = cam.pose();
            let (la, lb) = (anchor.to_local(ea.x, ea.y), anchor.to_local(eb.x, eb.y));
            let (da, db) = (la.norm(), lb.norm());
            if da == db {
                return Err(disagreement(qa, "equal distances"));
            }
            let closer = if da < db { (ea, la) } else { (eb, lb) };
            (anchor, closer.1, closer.0.label.clone())
        }
        _ => return Err(CotError::Unsupported(qa.task.clone())),
    };
    let expected = qa.correct_option().unwrap_or_default();
    if relation != expected {
        return Err(disagreement(qa, &relation));
    }
    let letter = OPTION_LETTERS[qa.correct_index.unwrap_or(0)];
    Ok(AnswerStep { task: qa.task.clone(), anchor, target, relation, letter })
}

fn fmt1(v: f64) -> String {
    let s = format!("{:.1}", v);
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

fn fmt_angle(deg: f64) -> String {
    let d = deg.round() as i64;
    match d {
        0 => "0 degrees".to_owned(),
        d if d > 0 => format!("{d} degrees(CCW)"),
        d => format!("{} degrees(CW)", -d),
    }
}

fn list_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => format!("the {one}"),
        [init @ .., last] => {
            format!("{} and the {}", init.iter().map(|n| format!("the {n}")).collect::<Vec<_>>().join(", "), last)
        }
    }
}

/// Four-step text ending in an answer tag.
pub fn render_procedural(
    qa: &QAItem,
    keyframes: &KeyframeStep,
    motion: &[PairwiseMotionStep],
    map: &CogMap,
    answer: &AnswerStep,
) -> String {
    let mut t = String::new();
    let names: Vec<String> = keyframes.groundings.iter().map(|g| g.label.clone()).collect();
    t.push_str("Step 1: **Find the objects in question and the images that show them.**\n");
    t.push_str(&format!("The question involves {}.", list_names(&names)));
    for g in &keyframes.groundings {
        match g.bbox {
            Some(b) => {
                t.push_str(&format!(" The {} is clearest in image {} at bbox {}.", g.label, g.image, b.render()))
            }
            None => t.push_str(&format!(" The {} appears in image {}.", g.label, g.image)),
        }
    }
    let imgs: Vec<String> = keyframes.images.iter().map(|i| i.to_string()).collect();
    t.push_str(&format!(" Keyframes: image [{}].\n", imgs.join(", ")));

    t.push_str("Step 2: **Follow the camera from keyframe to keyframe.**\n");
    if motion.is_empty() {
        t.push_str("A single keyframe covers everything, so no camera motion is needed.\n");
    }
    for s in motion {
        let shared = if s.shared.is_empty() {
            "no object is shared between them".to_owned()
        } else {
            format!("both show {}", s.shared.len())
                + if s.shared.len() == 1 { " common object" } else { " common objects" }
        };
        t.push_str(&format!(
            "From image {} to image {}, the camera {}; {}.\n",
            image_number(qa, &s.from),
            image_number(qa, &s.to),
            s.description,
            shared
        ));
    }

    t.push_str("Step 3: **Lay out cameras and objects on a top-down map.**\n");
    t.push_str(&format!(
        "The origin is the camera of image {}, with +y along its view and +x to its right.\n",
        image_number(qa, &map.reference_frame)
    ));
    let q = map.quantization;
    for e in &map.entries {
        match e.kind {
            EntityKind::Camera => t.push_str(&format!(
                "- camera of {} at x {}, y {}, facing {}\n",
                e.label,
                fmt1(e.x),
                fmt1(e.y),
                fmt_angle(e.heading_deg)
            )),
            EntityKind::Object => {
                let off = PlanarOffset::new(e.x, e.y);
                let bearing = if off.norm() > 0.0 { q.angle(off.bearing_ccw_deg()) } else { 0.0 };
                let bbox = keyframes
                    .groundings
                    .iter()
                    .find(|g| g.object_id.as_str() == e.entity)
                    .and_then(|g| g.bbox)
                    .map(|b| format!(" at bbox {},", b.render()))
                    .unwrap_or_default();
                t.push_str(&format!(
                    "- {}{} at {}, dist {}, x {}, y {}\n",
                    e.label,
                    bbox,
                    fmt_angle(bearing),
                    fmt1(q.dist(off.norm())),
                    fmt1(e.x),
                    fmt1(e.y)
                ));
            }
        }
    }

    t.push_str("Step 4: **Read the answer from the map.**\n");
    let (tx, ty) = (fmt1(answer.target.x), fmt1(answer.target.y));
    let sentence = match &qa.derivation {
        Derivation::Allocentric { .. } => format!(
            "Moving the origin to the {} and turning the map so the {} is straight ahead puts the {} at x {}, y {}, which is {}.",
            names.first().cloned().unwrap_or_default(),
            names.get(1).cloned().unwrap_or_default(),
            names.get(2).cloned().unwrap_or_default(),
            tx,
            ty,
            answer.relation
        ),
        Derivation::EgoDirection { .. } => format!(
            "Keeping the camera's heading and moving the origin to the {} puts the {} at x {}, y {}, which is {}.",
            names.first().cloned().unwrap_or_default(),
            names.get(1).cloned().unwrap_or_default(),
            tx,
            ty,
            answer.relation
        ),
        _ => format!(
            "Measured from the camera on the map, the {} is the closer of the two, at distance {}.",
            answer.relation,
            fmt1(answer.target.norm())
        ),
    };
    t.push_str(&sentence);
    t.push_str(&format!(" This matches option {}.\n<answer>{}</answer>", answer.letter, answer.letter));
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction4 {
    Up,
    Left,
    Down,
    Right,
}

impl Direction4 {
    /// Nearest of the four directions to a CCW heading from +y.
    pub fn from_heading(deg: f64) -> Self {
        match ((deg / 90.0).round() as i64).rem_euclid(4) {
            0 => Direction4::Up,
            1 => Direction4::Left,
            2 => Direction4::Down,
            _ => Direction4::Right,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Direction4::Up => "up",
            Direction4::Left => "left",
            Direction4::Down => "down",
            Direction4::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCogMap {
    pub grid_n: usize,
    /// Keyed by entity label.
    pub cells: BTreeMap<String, (usize, usize)>,
    pub orientation: BTreeMap<String, Direction4>,
}

/// Min-max normalizes positions into `grid_n` cells per axis; an axis with
/// no spread puts everything in the middle cell.
pub fn build_grid_cogmap(map: &CogMap, grid_n: usize) -> GridCogMap {
    let n = grid_n.max(2);
    let range = |f: fn(&CogMapEntry) -> f64| {
        let vals: Vec<f64> = map.entries.iter().map(f).collect();
        (vals.iter().copied().fold(f64::INFINITY, f64::min), vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let cell = |v: f64, (lo, hi): (f64, f64)| -> usize {
        if hi - lo < 1e-12 {
            (n - 1) / 2
        } else {
            (((v - lo) / (hi - lo)) * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as usize
        }
    };
    let (rx, ry) = (range(|e| e.x), range(|e| e.y));
    let mut cells = BTreeMap::new();
    let mut orientation = BTreeMap::new();
    for e in &map.entries {
        cells.insert(e.label.clone(), (cell(e.x, rx), cell(e.y, ry)));
        if e.kind == EntityKind::Camera {
            orientation.insert(e.label.clone(), Direction4::from_heading(e.heading_deg));
        }
    }
    GridCogMap { grid_n: n, cells, orientation }
}

pub fn render_grid(qa: &QAItem, map: &CogMap, grid: &GridCogMap, answer: &AnswerStep) -> String {
    let mut objects = serde_json::Map::new();
    let mut cameras = serde_json::Map::new();
    for e in &map.entries {
        let (i, j) = grid.cells[&e.label];
        match e.kind {
            EntityKind::Object => {
                objects.insert(e.label.clone(), serde_json::json!({ "position": [i, j] }));
            }
            EntityKind::Camera => {
                cameras.insert(
                    e.label.clone(),
                    serde_json::json!({ "position": [i, j], "facing": grid.orientation[&e.label].label() }),
                );
            }
        }
    }
    let doc = serde_json::json!({ "grid": [grid.grid_n, grid.grid_n], "objects": objects, "cameras": cameras });
    let reasoning = match &qa.derivation {
        Derivation::Allocentric { .. } => "Taking the first object as my position and turning to face the second",
        Derivation::EgoDirection { .. } => "Standing at the first object while facing the way the camera faces",
        _ => "Comparing how far each object lies from the camera",
    };
    format!(
        "Grid map of the scene (x to the right, y forward from the first keyframe):\n{}\n{}, the answer is {}.\n<answer>{}</answer>",
        serde_json::to_string(&doc).expect("grid serializes"),
        reasoning,
        answer.relation,
        answer.letter
    )
}

/// Full trace for one item in the given style.
pub fn build_trace(
    qa: &QAItem,
    scene: &Scene,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
    graph: Option<(&AssociationGraph, f64)>,
    qa_params: &QaParams,
    params: &CotParams,
    style: CotStyle,
) -> Result<CoTTrace, CotError> {
    if !SUPPORTED_TASKS.contains(&qa.task.as_str()) {
        return Err(CotError::Unsupported(qa.task.clone()));
    }
    let keyframes = localize_keyframes(qa, scene, visibility)?;
    let chain = connect_keyframes(&keyframes, &qa.frame_ids, graph);
    let motion = estimate_pairwise_motion(&chain, scene, visibility, qa_params, params.angle_step_deg)?;
    let (map, groundings) = build_cogmap(qa, &keyframes, &motion, scene, visibility, params.quantization())?;
    let answer = derive_answer_from_cogmap(&map, qa, qa_params)?;
    let kstep = KeyframeStep {
        images: keyframes.iter().map(|k| image_number(qa, k)).collect(),
        keyframes: keyframes.clone(),
        groundings,
    };
    let rendered = match style {
        CotStyle::Procedural => render_procedural(qa, &kstep, &motion, &map, &answer),
        CotStyle::Grid => render_grid(qa, &map, &build_grid_cogmap(&map, params.grid_n), &answer),
    };
    let final_answer = answer.letter;
    Ok(CoTTrace {
        qa_id: qa.qa_id.clone(),
        steps: vec![
            TraceStep::Keyframe(kstep),
            TraceStep::PairwiseMotion { steps: motion },
            TraceStep::MapUpdate { map },
            TraceStep::Answer(answer),
        ],
        rendered,
        final_answer,
    })
}

/// Emission record for a trace attempt; failures become dropped records.
pub fn trace_record(qa: &QAItem, style: CotStyle, result: Result<CoTTrace, CotError>) -> CotRecord {
    match result {
        Ok(t) => CotRecord {
            qa_id: qa.qa_id.clone(),
            style,
            text: t.rendered,
            final_answer: Some(t.final_answer.to_string()),
            dropped: false,
            reason: None,
        },
        Err(e) => CotRecord {
            qa_id: qa.qa_id.clone(),
            style,
            text: String::new(),
            final_answer: None,
            dropped: true,
            reason: Some(format!("{}: {e}", e.reason())),
        },
    }
}
