//! Geometric quantities behind each task, and re-evaluation of stored
//! derivations against the scene.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::distractors::round1;
use super::motion::{describe_motion, CameraMotion};
use super::{category_census, AnswerKind, Derivation, QAItem, QaError, QaParams, SizeAxis, VerticalRelation};
use crate::geometry::{classify_quadrant, classify_sector, planar_offset, PlanarOffset, PlanarPose, Quadrant, Sector};
use crate::scene::{Frame, FrameId, ObjectId, Scene, SceneObject};
use crate::visibility::{face_alignment, project_point, FrameVisibility, ObjectSide, PixelPoint};

pub fn camera_distance(frame: &Frame, object: &SceneObject) -> f64 {
    (frame.pose.position() - object.obb_center).norm()
}

pub fn pair_distance(a: &SceneObject, b: &SceneObject) -> f64 {
    (a.obb_center - b.obb_center).norm()
}

pub fn object_size(object: &SceneObject, axis: SizeAxis) -> f64 {
    let h = object.obb_half_extents;
    match axis {
        SizeAxis::Height => 2.0 * h.z,
        SizeAxis::Longest => 2.0 * h.x.max(h.y).max(h.z),
    }
}

/// Area of the smallest rectangle enclosing every object's ground-plane
/// footprint.
pub fn scene_footprint_area(objects: &[SceneObject]) -> f64 {
    let pts: Vec<(f64, f64)> = objects.iter().flat_map(|o| o.corners().map(|c| (c.x, c.y))).collect();
    min_area_rectangle(&pts)
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle; one side is collinear with a hull edge.
pub fn min_area_rectangle(pts: &[(f64, f64)]) -> f64 {
    let hull = convex_hull(pts.to_vec());
    if hull.len() < 3 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let len = (q.0 - p.0).hypot(q.1 - p.1);
        if len < 1e-12 {
            continue;
        }
        let (ux, uy) = ((q.0 - p.0) / len, (q.1 - p.1) / len);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for h in &hull {
            let u = h.0 * ux + h.1 * uy;
            let v = -h.0 * uy + h.1 * ux;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        best = best.min((hi_u - lo_u) * (hi_v - lo_v));
    }
    best
}

/// Offset of `b` relative to `a` in the camera frame of `frame`.
pub fn ego_offset(frame: &Frame, a: &SceneObject, b: &SceneObject) -> PlanarOffset {
    planar_offset(&frame.pose, &b.obb_center).sub(&planar_offset(&frame.pose, &a.obb_center))
}

fn z_range(o: &SceneObject) -> (f64, f64) {
    let zs = o.corners().map(|c| c.z);
    (zs.iter().copied().fold(f64::INFINITY, f64::min), zs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Where `b` sits relative to `a` vertically, with the clearance between
/// their extents. `None` when the extents overlap by more than `tol`.
pub fn vertical_relation(a: &SceneObject, b: &SceneObject, tol: f64) -> Option<(VerticalRelation, f64)> {
    let (a_lo, a_hi) = z_range(a);
    let (b_lo, b_hi) = z_range(b);
    let up = b_lo - a_hi;
    let down = a_lo - b_hi;
    match (up >= -tol, down >= -tol) {
        (true, false) => Some((VerticalRelation::Above, up)),
        (false, true) => Some((VerticalRelation::Below, down)),
        _ => None,
    }
}

/// Planar frame standing at `a` facing `b`.
pub fn anchor_frame(a: &SceneObject, b: &SceneObject, min_anchor_m: f64) -> Result<PlanarPose, QaError> {
    let (ax, ay) = (a.obb_center.x, a.obb_center.y);
    let (bx, by) = (b.obb_center.x, b.obb_center.y);
    let d = (bx - ax).hypot(by - ay);
    if d <= min_anchor_m {
        return Err(QaError::DegenerateAnchor(d));
    }
    Ok(PlanarPose::facing((ax, ay), (bx, by)))
}

pub fn allocentric_offset(
    a: &SceneObject,
    b: &SceneObject,
    c: &SceneObject,
    min_anchor_m: f64,
) -> Result<PlanarOffset, QaError> {
    let frame = anchor_frame(a, b, min_anchor_m)?;
    Ok(frame.to_local(c.obb_center.x, c.obb_center.y))
}

/// Best face and its lead over the runner-up.
pub fn visible_side_with_gap(object: &SceneObject, frame: &Frame) -> Option<(ObjectSide, f64)> {
    let mut scores = face_alignment(object, &frame.pose.position()).ok()?.to_vec();
    // Stable: equal scores keep tie-break order.
    scores.sort_by(|x, y| y.1.total_cmp(&x.1));
    Some((scores[0].0, scores[0].1 - scores[1].1))
}

pub fn format_pixel(p: &PixelPoint) -> String {
    format!("({}, {})", p.u.round() as i64, p.v.round() as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    /// Text of the correct option.
    Option(String),
    /// Unrounded numeric value.
    Numeric(f64),
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("unknown entity {name}")]
    MissingEntity { name: String },
    #[error("classification is ambiguous")]
    Ambiguous,
    #[error("expected {expected}, stored {stored}")]
    AnswerMismatch { expected: String, stored: String },
    #[error("option list is invalid: {reason}")]
    BadOptions { reason: String },
    #[error("frame {frame} is outside the image set")]
    FrameOutsideSet { frame: FrameId },
    #[error("category {category} has {count} visible instances")]
    DuplicateNamedCategory { category: String, count: usize },
}

fn obj<'s>(scene: &'s Scene, id: &ObjectId) -> Result<&'s SceneObject, Violation> {
    scene.object(id).ok_or_else(|| Violation::MissingEntity { name: id.to_string() })
}

fn frm<'s>(scene: &'s Scene, id: &FrameId) -> Result<&'s Frame, Violation> {
    scene.frame(id).ok_or_else(|| Violation::MissingEntity { name: id.to_string() })
}

/// Recomputes the answer of `derivation` from scene geometry alone.
pub fn expected_answer(
    derivation: &Derivation,
    scene: &Scene,
    params: &QaParams,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
) -> Result<Expected, Violation> {
    Ok(match derivation {
        Derivation::CameraDistance { frame_id, object_id, .. } => {
            Expected::Numeric(camera_distance(frm(scene, frame_id)?, obj(scene, object_id)?))
        }
        Derivation::PairDistance { a, b, .. } => Expected::Numeric(pair_distance(obj(scene, a)?, obj(scene, b)?)),
        Derivation::ObjectSize { object_id, axis, .. } => Expected::Numeric(object_size(obj(scene, object_id)?, *axis)),
        Derivation::SceneSize { .. } => Expected::Numeric(scene_footprint_area(&scene.objects)),
        Derivation::EgoDirection { frame_id, a, b, .. } => {
            let off = ego_offset(frm(scene, frame_id)?, obj(scene, a)?, obj(scene, b)?);
            match classify_sector(off, params.margin_deg) {
                Ok(Sector::Ambiguous) | Err(_) => return Err(Violation::Ambiguous),
                Ok(s) => Expected::Option(s.label().to_owned()),
            }
        }
        Derivation::Vertical { a, b, .. } => {
            match vertical_relation(obj(scene, a)?, obj(scene, b)?, params.vertical_tolerance_m) {
                Some((r, _)) => Expected::Option(r.label().to_owned()),
                None => return Err(Violation::Ambiguous),
            }
        }
        Derivation::NearFar { frame_id, a, b, .. } => {
            let f = frm(scene, frame_id)?;
            let (oa, ob) = (obj(scene, a)?, obj(scene, b)?);
            let (da, db) = (camera_distance(f, oa), camera_distance(f, ob));
            if da.max(db) < params.min_ratio_gap * da.min(db) {
                return Err(Violation::Ambiguous);
            }
            Expected::Option(if da < db { oa.display_name() } else { ob.display_name() })
        }
        Derivation::LargeSmall { a, b, .. } => {
            let (oa, ob) = (obj(scene, a)?, obj(scene, b)?);
            let (va, vb) = (oa.volume(), ob.volume());
            if va.max(vb) < params.min_ratio_gap * va.min(vb) {
                return Err(Violation::Ambiguous);
            }
            Expected::Option(if va > vb { oa.display_name() } else { ob.display_name() })
        }
        Derivation::VisibleSide { frame_id, object_id, .. } => {
            match visible_side_with_gap(obj(scene, object_id)?, frm(scene, frame_id)?) {
                Some((side, gap)) if gap >= params.side_min_gap => Expected::Option(side.label().to_owned()),
                _ => return Err(Violation::Ambiguous),
            }
        }
        Derivation::PointCorrespondence { frame_b, point_id, .. } => {
            let f = frm(scene, frame_b)?;
            let p = scene
                .points
                .as_deref()
                .unwrap_or_default()
                .iter()
                .find(|p| p.point_id == *point_id)
                .ok_or_else(|| Violation::MissingEntity { name: format!("point {}", point_id.0) })?;
            let px = project_point(&f.intrinsics, &f.pose, &p.position).map_err(|_| Violation::Ambiguous)?;
            Expected::Option(format_pixel(&px))
        }
        Derivation::ObjectCorrespondence { frame_b, object_a, .. } => {
            let group = &obj(scene, object_a)?.instance_group;
            let vis = visibility.get(frame_b).ok_or_else(|| Violation::MissingEntity { name: frame_b.to_string() })?;
            let matches: Vec<_> = scene
                .objects
                .iter()
                .filter(|o| &o.instance_group == group)
                .filter_map(|o| vis.records.get(&o.object_id).and_then(|r| r.visible_bbox))
                .collect();
            match matches.as_slice() {
                [b] => Expected::Option(b.render()),
                _ => return Err(Violation::Ambiguous),
            }
        }
        Derivation::CameraMotion { frame_a, frame_b, .. } => {
            let m = CameraMotion::between(&frm(scene, frame_a)?.pose, &frm(scene, frame_b)?.pose);
            if m.near_threshold(params.tau_t_m, params.tau_r_deg, params.motion_band) {
                return Err(Violation::Ambiguous);
            }
            Expected::Option(describe_motion(&m.labels(params.tau_t_m, params.tau_r_deg), None))
        }
        Derivation::Allocentric { a, b, c, .. } => {
            let off = allocentric_offset(obj(scene, a)?, obj(scene, b)?, obj(scene, c)?, params.min_anchor_m)
                .map_err(|_| Violation::Ambiguous)?;
            match classify_quadrant(off, params.margin_deg) {
                Ok(Quadrant::Ambiguous) | Err(_) => return Err(Violation::Ambiguous),
                Ok(q) => Expected::Option(q.label().to_owned()),
            }
        }
    })
}

/// Checks every item-level invariant; an empty result means the item is
/// sound. `set_frames` is the emitting image set.
pub fn revalidate_item(
    item: &QAItem,
    scene: &Scene,
    set_frames: &[FrameId],
    params: &QaParams,
    visibility: &BTreeMap<FrameId, FrameVisibility>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for f in &item.frame_ids {
        if !set_frames.contains(f) {
            out.push(Violation::FrameOutsideSet { frame: f.clone() });
        }
    }
    if item.derivation.is_ambiguous() {
        out.push(Violation::Ambiguous);
    }
    let census = category_census(scene, &item.frame_ids, visibility);
    for id in item.named_objects() {
        if let Some(o) = scene.object(id) {
            let n = census.get(&o.category.to_lowercase()).map_or(0, BTreeSet::len);
            if n != 1 {
                out.push(Violation::DuplicateNamedCategory { category: o.category.clone(), count: n });
            }
        }
    }
    let mcq = item.answer_kind == AnswerKind::Mcq;
    if mcq {
        let distinct: BTreeSet<&String> = item.options.iter().collect();
        if !(2..=6).contains(&item.options.len()) || distinct.len() != item.options.len() {
            out.push(Violation::BadOptions {
                reason: format!("{} options, {} distinct", item.options.len(), distinct.len()),
            });
        }
        if item.correct_option().is_none() {
            out.push(Violation::BadOptions { reason: "correct index out of range".into() });
        }
    }
    match expected_answer(&item.derivation, scene, params, visibility) {
        Err(v) => out.push(v),
        Ok(Expected::Numeric(raw)) => {
            let expected = round1(raw);
            let stored = if mcq {
                item.correct_option().and_then(|s| s.parse::<f64>().ok())
            } else {
                item.numeric_answer.map(|n| n.value)
            };
            if stored.is_none_or(|s| (s - expected).abs() > 1e-9) {
                out.push(Violation::AnswerMismatch {
                    expected: format!("{expected:.1}"),
                    stored: format!("{stored:?}"),
                });
            }
        }
        Ok(Expected::Option(text)) => {
            let stored = item.correct_option().unwrap_or_default();
            if stored != text {
                out.push(Violation::AnswerMismatch { expected: text, stored: stored.to_owned() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Rotation, Vec3};
    use crate::scene::CameraIntrinsics;

    fn boxy(id: &str, c: Vec3, h: Vec3) -> SceneObject {
        SceneObject {
            object_id: id.into(),
            category: id.into(),
            instance_group: id.into(),
            obb_center: c,
            obb_half_extents: h,
            obb_rotation: Rotation::identity(),
            has_canonical_orientation: true,
        }
    }

    fn frame_at(pos: Vec3) -> Frame {
        Frame {
            frame_id: "f".into(),
            seq_index: 0,
            intrinsics: CameraIntrinsics::from_fov(640, 480, 60.0),
            pose: Pose::camera(pos, 0.0, 0.0),
            image_ref: None,
        }
    }

    #[test]
    fn metric_examples() {
        let f = frame_at(Vec3::zeros());
        let o = boxy("o", Vec3::new(3.0, 4.0, 0.0), Vec3::new(0.1, 0.1, 0.1));
        assert!((camera_distance(&f, &o) - 5.0).abs() < 1e-12);
        let a = boxy("a", Vec3::zeros(), Vec3::repeat(0.1));
        let b = boxy("b", Vec3::new(0.0, 2.0, 0.0), Vec3::repeat(0.1));
        assert!((pair_distance(&a, &b) - 2.0).abs() < 1e-12);
        let tall = boxy("t", Vec3::zeros(), Vec3::new(0.5, 0.25, 1.0));
        assert_eq!(object_size(&tall, SizeAxis::Height), 2.0);
        assert_eq!(object_size(&tall, SizeAxis::Longest), 2.0);
    }

    #[test]
    fn footprint_is_rotation_invariant() {
        let objs = vec![
            boxy("a", Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 0.5, 0.5)),
            boxy("b", Vec3::new(3.0, 2.0, 0.5), Vec3::new(0.5, 0.5, 0.5)),
        ];
        // Axis-aligned extent: x from -1 to 3.5, y from -0.5 to 2.5 -> 13.5,
        // and the minimum rectangle can only be smaller.
        let area = scene_footprint_area(&objs);
        assert!(area <= 13.5 + 1e-9 && area > 5.0);
        let g = Pose::new(Rotation::about_z(0.7), Vec3::new(4.0, -2.0, 1.0));
        let moved: Vec<SceneObject> = objs
            .iter()
            .map(|o| SceneObject {
                obb_center: g.apply(&o.obb_center),
                obb_rotation: g.rotation.then(&o.obb_rotation),
                ..o.clone()
            })
            .collect();
        assert!((scene_footprint_area(&moved) - area).abs() < 1e-9);
        let single = vec![boxy("a", Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0))];
        assert!((scene_footprint_area(&single) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn vertical_relations() {
        let table = boxy("table", Vec3::new(0.0, 0.0, 0.375), Vec3::new(0.5, 0.5, 0.375));
        let cup = boxy("cup", Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.05, 0.05, 0.05));
        assert_eq!(vertical_relation(&table, &cup, 0.02).unwrap().0, VerticalRelation::Above);
        assert_eq!(vertical_relation(&cup, &table, 0.02).unwrap().0, VerticalRelation::Below);
        let chair = boxy("chair", Vec3::new(1.0, 0.0, 0.45), Vec3::new(0.25, 0.25, 0.45));
        assert!(vertical_relation(&table, &chair, 0.02).is_none());
    }

    #[test]
    fn allocentric_examples() {
        let a = boxy("a", Vec3::zeros(), Vec3::repeat(0.1));
        let b = boxy("b", Vec3::new(0.0, 5.0, 0.0), Vec3::repeat(0.1));
        let c = boxy("c", Vec3::new(1.0, 1.0, 0.0), Vec3::repeat(0.1));
        let off = allocentric_offset(&a, &b, &c, 0.2).unwrap();
        assert_eq!(classify_quadrant(off, 10.0).unwrap(), Quadrant::FrontRight);
        let near = boxy("n", Vec3::new(0.1, 0.1, 0.0), Vec3::repeat(0.1));
        assert!(matches!(allocentric_offset(&a, &near, &c, 0.2), Err(QaError::DegenerateAnchor(_))));
        let on_line = boxy("l", Vec3::new(0.05, 3.0, 0.0), Vec3::repeat(0.1));
        let off = allocentric_offset(&a, &b, &on_line, 0.2).unwrap();
        assert_eq!(classify_quadrant(off, 10.0).unwrap(), Quadrant::Ambiguous);
    }

    #[test]
    fn ego_direction_example() {
        let f = frame_at(Vec3::new(0.0, -3.0, 0.5));
        let a = boxy("a", Vec3::new(0.0, 0.0, 0.5), Vec3::repeat(0.1));
        let b = boxy("b", Vec3::new(2.0, 0.0, 0.5), Vec3::repeat(0.1));
        let off = ego_offset(&f, &a, &b);
        assert!((off.x - 2.0).abs() < 1e-9 && off.y.abs() < 1e-9);
        assert_eq!(classify_sector(off, 10.0).unwrap(), Sector::Right);
    }

    #[test]
    fn visible_side_tie_gap() {
        let f = |deg: f64| {
            let t = deg.to_radians();
            frame_at(Vec3::new(5.0 * t.sin(), 5.0 * t.cos(), 0.0))
        };
        let o = boxy("o", Vec3::zeros(), Vec3::repeat(0.5));
        let (side, gap) = visible_side_with_gap(&o, &f(0.0)).unwrap();
        assert_eq!(side, ObjectSide::Front);
        assert!(gap > 0.9);
        // 44° vs 46° split between front and right faces.
        let (_, gap) = visible_side_with_gap(&o, &f(45.0 + 1.0)).unwrap();
        assert!(gap < 0.1);
    }
}
