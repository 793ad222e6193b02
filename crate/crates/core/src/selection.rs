//! Curation: object filtering, camera-pose filtering, cross-view association
//! graphs, image-set selection and greedy full-scene frame coverage.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PlanarPose;
use crate::scene::{Frame, FrameId, InstanceGroup, ObjectId, PointId, Scene};
use crate::visibility::VisibilityRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("every frame was rejected by the pose filter")]
    AllFramesRejected,
    #[error("point-overlap association needs labeled points")]
    MissingPointAnnotations,
    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectFilterRules {
    pub banned_categories: BTreeSet<String>,
    pub min_area_fraction: f64,
    pub min_visible_ratio: f64,
}

impl Default for ObjectFilterRules {
    fn default() -> Self {
        ObjectFilterRules {
            banned_categories: ["floor", "ceiling", "wall", "unknown", ""].into_iter().map(String::from).collect(),
            min_area_fraction: 0.005,
            min_visible_ratio: 0.3,
        }
    }
}

impl ObjectFilterRules {
    pub fn is_banned(&self, category: &str) -> bool {
        let c = category.trim().to_lowercase();
        self.banned_categories.iter().any(|b| b.to_lowercase() == c)
    }
}

/// Per-frame set of objects that survive semantic and visibility filtering.
/// Frames appear in the output whenever they appear in `records`.
pub fn filter_objects(
    scene: &Scene,
    records: &[VisibilityRecord],
    rules: &ObjectFilterRules,
) -> BTreeMap<FrameId, BTreeSet<ObjectId>> {
    let mut out: BTreeMap<FrameId, BTreeSet<ObjectId>> = BTreeMap::new();
    for r in records {
        let kept = out.entry(r.frame_id.clone()).or_default();
        let Some(obj) = scene.object(&r.object_id) else {
            continue;
        };
        if rules.is_banned(&obj.category) {
            continue;
        }
        if r.visible_ratio <= 0.0 || r.visible_bbox.is_none() {
            continue;
        }
        if r.area_fraction >= rules.min_area_fraction && r.visible_ratio >= rules.min_visible_ratio {
            kept.insert(r.object_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseFilterLimits {
    pub max_abs_pitch_deg: f64,
    pub max_abs_yaw_dev_deg: f64,
}

impl Default for PoseFilterLimits {
    fn default() -> Self {
        PoseFilterLimits { max_abs_pitch_deg: 75.0, max_abs_yaw_dev_deg: 180.0 }
    }
}

/// Circular mean of the frames' ground-plane headings, if they have one.
pub fn dominant_heading_deg(frames: &[Frame]) -> Option<f64> {
    let (mut sx, mut sy) = (0.0, 0.0);
    for f in frames {
        let h = PlanarPose::from_camera(&f.pose).heading_deg.to_radians();
        sx += h.cos();
        sy += h.sin();
    }
    (sx.hypot(sy) > 1e-9 * frames.len().max(1) as f64).then(|| sy.atan2(sx).to_degrees())
}

/// Drops frames looking too steeply up or down, or too far off the scene's
/// dominant heading. Order is preserved.
pub fn filter_poses(frames: &[Frame], limits: &PoseFilterLimits) -> Result<Vec<Frame>, SelectionError> {
    let dominant = dominant_heading_deg(frames);
    let kept: Vec<Frame> = frames
        .iter()
        .filter(|f| {
            if f.pose.pitch_deg().abs() > limits.max_abs_pitch_deg {
                return false;
            }
            match dominant {
                Some(d) if limits.max_abs_yaw_dev_deg < 180.0 => {
                    let h = PlanarPose::from_camera(&f.pose).heading_deg;
                    crate::geometry::wrap_deg_180(h - d).abs() <= limits.max_abs_yaw_dev_deg
                }
                _ => true,
            }
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        Err(SelectionError::AllFramesRejected)
    } else {
        Ok(kept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    PointOverlap,
    SharedObjects,
}

/// Per-frame annotations that association scores are computed from.
#[derive(Debug, Clone, Default)]
pub struct AssociationInputs {
    pub visible_points: BTreeMap<FrameId, BTreeSet<PointId>>,
    pub kept_objects: BTreeMap<FrameId, BTreeSet<ObjectId>>,
}

impl AssociationInputs {
    fn groups(&self, scene: &Scene, frame: &FrameId) -> BTreeSet<InstanceGroup> {
        self.kept_objects
            .get(frame)
            .into_iter()
            .flatten()
            .filter_map(|o| scene.object(o).map(|o| o.instance_group.clone()))
            .collect()
    }
}

pub fn association_score(
    a: &FrameId,
    b: &FrameId,
    scene: &Scene,
    mode: AssociationMode,
    inputs: &AssociationInputs,
) -> Result<f64, SelectionError> {
    for f in [a, b] {
        if scene.frame(f).is_none() {
            return Err(SelectionError::UnknownFrame(f.clone()));
        }
    }
    match mode {
        AssociationMode::PointOverlap => {
            if !scene.has_points() {
                return Err(SelectionError::MissingPointAnnotations);
            }
            let empty = BTreeSet::new();
            let va = inputs.visible_points.get(a).unwrap_or(&empty);
            let vb = inputs.visible_points.get(b).unwrap_or(&empty);
            Ok(va.intersection(vb).count() as f64)
        }
        AssociationMode::SharedObjects => {
            let ga = inputs.groups(scene, a);
            let gb = inputs.groups(scene, b);
            Ok(ga.intersection(&gb).count() as f64)
        }
    }
}

/// Undirected weighted graph over frames. Missing edges score zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    pub nodes: Vec<FrameId>,
    edges: BTreeMap<(FrameId, FrameId), f64>,
    pub mode: AssociationMode,
}

fn edge_key(a: &FrameId, b: &FrameId) -> (FrameId, FrameId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl AssociationGraph {
    pub fn new(nodes: Vec<FrameId>, mode: AssociationMode) -> Self {
        AssociationGraph { nodes, edges: BTreeMap::new(), mode }
    }

    /// Sets a symmetric edge. Self-edges and non-positive scores are ignored.
    pub fn set(&mut self, a: &FrameId, b: &FrameId, score: f64) {
        if a == b {
            return;
        }
        let key = edge_key(a, b);
        if score > 0.0 {
            self.edges.insert(key, score);
        } else {
            self.edges.remove(&key);
        }
    }

    pub fn score(&self, a: &FrameId, b: &FrameId) -> f64 {
        if a == b {
            return 0.0;
        }
        self.edges.get(&edge_key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&FrameId, &FrameId, f64)> {
        self.edges.iter().map(|((a, b), s)| (a, b, *s))
    }

    /// Neighbors reachable over edges scoring at least `s_min`, sorted by id.
    pub fn neighbors(&self, a: &FrameId, s_min: f64) -> Vec<&FrameId> {
        let mut out: Vec<&FrameId> =
            self.nodes.iter().filter(|b| *b != a && self.score(a, b) >= s_min && self.score(a, b) > 0.0).collect();
        out.sort();
        out
    }

    /// Hop-count shortest path over edges scoring at least `s_min`,
    /// restricted to `allowed` nodes. Ties go to lower frame ids.
    pub fn shortest_path(
        &self,
        from: &FrameId,
        to: &FrameId,
        s_min: f64,
        allowed: &BTreeSet<FrameId>,
    ) -> Option<Vec<FrameId>> {
        if from == to {
            return Some(vec![from.clone()]);
        }
        let mut prev: BTreeMap<FrameId, FrameId> = BTreeMap::new();
        let mut seen = BTreeSet::from([from.clone()]);
        let mut queue = std::collections::VecDeque::from([from.clone()]);
        while let Some(cur) = queue.pop_front() {
            for n in self.neighbors(&cur, s_min) {
                if !allowed.contains(n) || !seen.insert(n.clone()) {
                    continue;
                }
                prev.insert(n.clone(), cur.clone());
                if n == to {
                    let mut path = vec![to.clone()];
                    while let Some(p) = prev.get(path.last().unwrap()) {
                        path.push(p.clone());
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(n.clone());
            }
        }
        None
    }
}

pub fn build_association_graph(
    frames: &[Frame],
    scene: &Scene,
    mode: AssociationMode,
    inputs: &AssociationInputs,
) -> Result<AssociationGraph, SelectionError> {
    let ids: Vec<FrameId> = frames.iter().map(|f| f.frame_id.clone()).collect();
    let mut graph = AssociationGraph::new(ids.clone(), mode);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let s = association_score(a, b, scene, mode, inputs)?;
            graph.set(a, b, s);
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSetKind {
    /// Connectivity and difficulty constrained.
    Association,
    /// Output of greedy coverage selection.
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub frame_ids: Vec<FrameId>,
    pub pairwise_scores: Vec<Vec<f64>>,
    pub s_min: f64,
    pub s_max: f64,
    pub kind: ImageSetKind,
}

impl ImageSet {
    pub fn from_frames(
        graph: &AssociationGraph,
        frame_ids: Vec<FrameId>,
        s_min: f64,
        s_max: f64,
        kind: ImageSetKind,
    ) -> Self {
        let pairwise_scores = frame_ids.iter().map(|a| frame_ids.iter().map(|b| graph.score(a, b)).collect()).collect();
        ImageSet { frame_ids, pairwise_scores, s_min, s_max, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSetParams {
    pub set_size: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub max_sets: usize,
    /// Prefer sets showing two or more instances of one category.
    pub prefer_duplicate_categories: bool,
}

impl Default for ImageSetParams {
    fn default() -> Self {
        ImageSetParams {
            set_size: 4,
            s_min: 2.0,
            s_max: f64::INFINITY,
            max_sets: 8,
            prefer_duplicate_categories: false,
        }
    }
}

/// Optional predicate marking image sets to rank first.
pub type SetPreference<'a> = Option<&'a dyn Fn(&[FrameId]) -> bool>;

/// Seeded randomized growth: start from a random anchor and repeatedly add a
/// random frame that has an edge of at least `s_min` into the set and no
/// edge above `s_max` to any member. Restarts are bounded; the result may
/// hold fewer than `max_sets` sets.
///
/// Growth keeps every set connected over `s_min` edges by construction, and
/// the cap check keeps every pair at or below `s_max`.
pub fn select_image_sets<R: Rng>(
    graph: &AssociationGraph,
    params: &ImageSetParams,
    rng: &mut R,
    prefer: SetPreference<'_>,
) -> Vec<ImageSet> {
    let n = graph.nodes.len();
    if params.set_size < 2 || params.set_size > n || params.max_sets == 0 {
        return Vec::new();
    }
    let order: BTreeMap<&FrameId, usize> = graph.nodes.iter().enumerate().map(|(i, f)| (f, i)).collect();
    let wanted = if prefer.is_some() { params.max_sets * 4 } else { params.max_sets };
    let attempts = wanted * 20 + 20;
    let mut found: Vec<Vec<FrameId>> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();

    for _ in 0..attempts {
        if found.len() >= wanted {
            break;
        }
        let mut members = vec![rng.gen_range(0..n)];
        while members.len() < params.set_size {
            let candidates: Vec<usize> = (0..n)
                .filter(|c| !members.contains(c))
                .filter(|&c| {
                    let fc = &graph.nodes[c];
                    let mut linked = false;
                    for &m in &members {
                        let s = graph.score(fc, &graph.nodes[m]);
                        if s > params.s_max {
                            return false;
                        }
                        linked |= s >= params.s_min && s > 0.0;
                    }
                    linked
                })
                .collect();
            match candidates.choose(rng) {
                Some(&c) => members.push(c),
                None => break,
            }
        }
        if members.len() < params.set_size {
            continue;
        }
        members.sort_unstable();
        if seen.insert(members.clone()) {
            found.push(members.iter().map(|&i| graph.nodes[i].clone()).collect());
        }
    }

    if let Some(pred) = prefer {
        // Stable: preferred sets first, discovery order otherwise.
        found.sort_by_key(|s| !pred(s));
    }
    found.truncate(params.max_sets);
    found
        .into_iter()
        .map(|mut ids| {
            ids.sort_by_key(|f| order[f]);
            ImageSet::from_frames(graph, ids, params.s_min, params.s_max, ImageSetKind::Association)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageParams {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n_min: usize,
}

impl Default for CoverageParams {
    fn default() -> Self {
        CoverageParams { rho_min: 0.03, rho_max: 0.20, n_min: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageSelection {
    /// Accepted plus inserted frames, in temporal order.
    pub selected: Vec<FrameId>,
    /// Frames accepted by the overlap test (including the starting frame).
    pub accepted: Vec<FrameId>,
    /// Frames added to reach the minimum count.
    pub inserted: Vec<FrameId>,
    /// Frames with no visible points; they are never accepted.
    pub skipped_empty: Vec<FrameId>,
}

/// Greedy coverage selection with overlap control.
///
/// Starting from the first frame with visible points, each later frame is
/// accepted iff the fraction of its visible points already covered lies in
/// `[rho_min, rho_max]`; accepted frames extend the covered set. If fewer
/// than `n_min` frames result, the frame nearest the midpoint of each of the
/// `n_min - |S|` widest temporal gaps is inserted, in rounds, until `n_min`
/// is reached or no frame is left.
pub fn select_coverage_frames(
    frames: &[Frame],
    visible_sets: &BTreeMap<FrameId, BTreeSet<PointId>>,
    params: &CoverageParams,
) -> CoverageSelection {
    let empty = BTreeSet::new();
    let vis = |f: &Frame| visible_sets.get(&f.frame_id).unwrap_or(&empty);
    let mut out = CoverageSelection::default();

    let Some(start) = frames.iter().position(|f| !vis(f).is_empty()) else {
        out.skipped_empty = frames.iter().map(|f| f.frame_id.clone()).collect();
        return out;
    };
    out.skipped_empty.extend(frames[..start].iter().map(|f| f.frame_id.clone()));

    let mut chosen = vec![start];
    let mut covered: BTreeSet<PointId> = vis(&frames[start]).clone();
    for (k, f) in frames.iter().enumerate().skip(start + 1) {
        let v = vis(f);
        if v.is_empty() {
            out.skipped_empty.push(f.frame_id.clone());
            continue;
        }
        let rho = v.intersection(&covered).count() as f64 / v.len() as f64;
        if params.rho_min <= rho && rho <= params.rho_max {
            chosen.push(k);
            covered.extend(v.iter().copied());
        }
    }
    out.accepted = chosen.iter().map(|&k| frames[k].frame_id.clone()).collect();

    let mut inserted = Vec::new();
    while chosen.len() < params.n_min {
        let picks = gap_picks(frames, &chosen, params.n_min - chosen.len());
        if picks.is_empty() {
            break;
        }
        for k in picks {
            let pos = chosen.partition_point(|&c| c < k);
            chosen.insert(pos, k);
            inserted.push(k);
        }
    }
    inserted.sort_unstable();
    out.inserted = inserted.iter().map(|&k| frames[k].frame_id.clone()).collect();
    out.selected = chosen.iter().map(|&k| frames[k].frame_id.clone()).collect();
    out
}

/// Midpoint frames of the `deficit` widest temporal gaps that still hold
/// unselected frames, widest first with ties to the lower sequence index.
/// The spans before the first and after the last selected frame count as
/// gaps bounded one step past the sequence.
fn gap_picks(frames: &[Frame], chosen: &[usize], deficit: usize) -> Vec<usize> {
    let seq = |k: usize| frames[k].seq_index as f64;
    let t = frames.len();
    // (lo_seq, hi_seq, first interior index, one-past-last interior index)
    let mut gaps: Vec<(f64, f64, usize, usize)> = Vec::new();
    if chosen[0] > 0 {
        gaps.push((seq(0) - 1.0, seq(chosen[0]), 0, chosen[0]));
    }
    for w in chosen.windows(2) {
        gaps.push((seq(w[0]), seq(w[1]), w[0] + 1, w[1]));
    }
    let last = *chosen.last().unwrap();
    if last + 1 < t {
        gaps.push((seq(last), seq(t - 1) + 1.0, last + 1, t));
    }
    gaps.retain(|g| g.2 < g.3);
    gaps.sort_by(|a, b| (b.1 - b.0).total_cmp(&(a.1 - a.0)).then(a.0.total_cmp(&b.0)));
    gaps.truncate(deficit);
    gaps.iter()
        .map(|g| {
            let mid = (g.0 + g.1) / 2.0;
            (g.2..g.3).min_by(|&a, &b| (seq(a) - mid).abs().total_cmp(&(seq(b) - mid).abs()).then(a.cmp(&b))).unwrap()
        })
        .collect()
}
