//! Projection of scene content into frames: pixel coordinates, per-object
//! projected and visible boxes, and which face of an object faces a camera.
//!
//! Occlusion is resolved with two tests. Labeled points compete in a
//! downsampled depth buffer, and every point is also checked against the
//! bounding boxes of the objects it does not belong to. Objects without
//! labeled points fall back to ray casting their box surface against the
//! other boxes on the same raster.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{world_to_camera, Pose, Vec3};
use crate::scene::{CameraIntrinsics, Frame, FrameId, LabeledPoint, ObjectId, PointId, Scene, SceneObject};

/// Points closer than this to the camera plane are treated as behind it.
const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error("point is behind the camera (depth {depth:.3e})")]
    BehindCamera { depth: f64 },
    #[error("object {0} does not project into the frame")]
    NotProjectable(ObjectId),
    #[error("object {0} has no canonical orientation")]
    NoCanonicalOrientation(ObjectId),
    #[error("camera lies inside object {0}")]
    CameraInsideObject(ObjectId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Axis-aligned image box in normalized `[0, 1]` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Box2D {
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn contains_box(&self, other: &Box2D, tol: f64) -> bool {
        other.x1 >= self.x1 - tol && other.y1 >= self.y1 - tol && other.x2 <= self.x2 + tol && other.y2 <= self.y2 + tol
    }

    pub fn intersect(&self, other: &Box2D) -> Box2D {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        Box2D { x1, y1, x2: self.x2.min(other.x2).max(x1), y2: self.y2.min(other.y2).max(y1) }
    }

    /// `[x1, y1, x2, y2]` at two decimals.
    pub fn render(&self) -> String {
        format!("[{}, {}, {}, {}]", fmt2(self.x1), fmt2(self.y1), fmt2(self.x2), fmt2(self.y2))
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }
}

fn fmt2(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let s = format!("{r:.2}");
    let s = s.trim_end_matches('0');
    let s = if s.ends_with('.') { format!("{s}0") } else { s.to_owned() };
    if s == "-0.0" {
        "0.0".to_owned()
    } else {
        s
    }
}

/// Accumulates a pixel-space bounding box, then clips and normalizes it.
#[derive(Debug, Clone, Copy)]
struct PixelBounds {
    min_u: f64,
    min_v: f64,
    max_u: f64,
    max_v: f64,
}

impl PixelBounds {
    fn empty() -> Self {
        PixelBounds { min_u: f64::INFINITY, min_v: f64::INFINITY, max_u: f64::NEG_INFINITY, max_v: f64::NEG_INFINITY }
    }

    fn add(&mut self, u: f64, v: f64) {
        self.min_u = self.min_u.min(u);
        self.min_v = self.min_v.min(v);
        self.max_u = self.max_u.max(u);
        self.max_v = self.max_v.max(v);
    }

    fn is_empty(&self) -> bool {
        self.min_u > self.max_u
    }

    fn normalized(&self, k: &CameraIntrinsics) -> Box2D {
        let (w, h) = (k.width as f64, k.height as f64);
        let x1 = (self.min_u.clamp(0.0, w)) / w;
        let x2 = (self.max_u.clamp(0.0, w)) / w;
        let y1 = (self.min_v.clamp(0.0, h)) / h;
        let y2 = (self.max_v.clamp(0.0, h)) / h;
        Box2D { x1, y1, x2, y2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRecord {
    pub frame_id: FrameId,
    pub object_id: ObjectId,
    pub projected_bbox: Box2D,
    pub visible_bbox: Option<Box2D>,
    pub visible_ratio: f64,
    pub area_fraction: f64,
}

impl VisibilityRecord {
    pub fn is_visible(&self) -> bool {
        self.visible_bbox.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSide {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl ObjectSide {
    /// Tie-break priority order.
    pub const ALL: [ObjectSide; 6] =
        [ObjectSide::Front, ObjectSide::Back, ObjectSide::Left, ObjectSide::Right, ObjectSide::Top, ObjectSide::Bottom];

    /// Outward normal in the object frame.
    pub fn local_normal(&self) -> Vec3 {
        match self {
            ObjectSide::Front => Vec3::y(),
            ObjectSide::Back => -Vec3::y(),
            ObjectSide::Right => Vec3::x(),
            ObjectSide::Left => -Vec3::x(),
            ObjectSide::Top => Vec3::z(),
            ObjectSide::Bottom => -Vec3::z(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ObjectSide::Front => "front",
            ObjectSide::Back => "back",
            ObjectSide::Left => "left",
            ObjectSide::Right => "right",
            ObjectSide::Top => "top",
            ObjectSide::Bottom => "bottom",
        }
    }
}

/// Depth-buffer occlusion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionPolicy {
    /// Raster cell edge in native pixels.
    pub downsample: u32,
    /// A competitor must be nearer by more than this to hide a point, meters.
    pub depth_slack_m: f64,
}

impl Default for OcclusionPolicy {
    fn default() -> Self {
        OcclusionPolicy { downsample: 4, depth_slack_m: 0.05 }
    }
}

/// Pinhole projection of a world point. Points outside the image are
/// returned as-is; only points behind the camera are an error.
pub fn project_point(k: &CameraIntrinsics, pose: &Pose, p: &Vec3) -> Result<PixelPoint, VisibilityError> {
    let c = world_to_camera(pose, p);
    project_camera_point(k, &c)
}

fn project_camera_point(k: &CameraIntrinsics, c: &Vec3) -> Result<PixelPoint, VisibilityError> {
    if c.z <= MIN_DEPTH {
        return Err(VisibilityError::BehindCamera { depth: c.z });
    }
    Ok(PixelPoint { u: k.cx + k.fx * c.x / c.z, v: k.cy + k.fy * c.y / c.z, depth: c.z })
}

fn in_bounds(k: &CameraIntrinsics, px: &PixelPoint) -> bool {
    px.u >= 0.0 && px.v >= 0.0 && px.u < k.width as f64 && px.v < k.height as f64
}

/// An object box prepared for segment tests from one camera center.
struct BoxOccluder<'a> {
    object: &'a SceneObject,
    origin_local: Vec3,
    camera_inside: bool,
}

impl<'a> BoxOccluder<'a> {
    fn new(object: &'a SceneObject, camera: &Vec3) -> Self {
        let origin_local = world_to_camera(&object.obb_pose(), camera);
        let h = object.obb_half_extents;
        let camera_inside = (0..3).all(|i| origin_local[i].abs() <= h[i]);
        BoxOccluder { object, origin_local, camera_inside }
    }

    /// Entry parameter `s` in `(0, 1)` of the segment camera → `target`, if
    /// the segment enters the box before reaching the target.
    fn entry(&self, target: &Vec3) -> Option<f64> {
        if self.camera_inside {
            return None;
        }
        let end = world_to_camera(&self.object.obb_pose(), target);
        let d = end - self.origin_local;
        let h = self.object.obb_half_extents;
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if self.origin_local[i].abs() > h[i] {
                    return None;
                }
                continue;
            }
            let a = (-h[i] - self.origin_local[i]) / d[i];
            let b = (h[i] - self.origin_local[i]) / d[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t0 > 0.0 && t0 < 1.0).then_some(t0)
    }
}

/// Per-frame visibility of labeled points.
///
/// A point is visible when it projects inside the image in front of the
/// camera, no point in its raster cell is nearer by more than the slack, and
/// no other object's box is crossed more than the slack before reaching it.
pub fn visible_point_set(
    frame: &Frame,
    points: &[LabeledPoint],
    occluders: &[SceneObject],
    policy: &OcclusionPolicy,
) -> BTreeSet<PointId> {
    visible_point_indices(frame, points, occluders, policy).into_iter().map(|i| points[i].point_id).collect()
}

fn visible_point_indices(
    frame: &Frame,
    points: &[LabeledPoint],
    occluders: &[SceneObject],
    policy: &OcclusionPolicy,
) -> Vec<usize> {
    let k = &frame.intrinsics;
    let ds = policy.downsample.max(1) as f64;
    let cols = (k.width as f64 / ds).ceil() as usize;
    let rows = (k.height as f64 / ds).ceil() as usize;
    let mut zbuf = vec![f64::INFINITY; cols * rows];

    let projected: Vec<Option<(usize, PixelPoint)>> = points
        .iter()
        .map(|p| {
            let px = project_point(k, &frame.pose, &p.position).ok()?;
            if !in_bounds(k, &px) {
                return None;
            }
            let cell = (px.v / ds) as usize * cols + (px.u / ds) as usize;
            Some((cell, px))
        })
        .collect();
    for (cell, px) in projected.iter().flatten() {
        if px.depth < zbuf[*cell] {
            zbuf[*cell] = px.depth;
        }
    }

    let camera = frame.pose.position();
    let boxes: Vec<BoxOccluder> = occluders.iter().map(|o| BoxOccluder::new(o, &camera)).collect();
    let slack = policy.depth_slack_m;
    projected
        .iter()
        .enumerate()
        .filter_map(|(i, pr)| {
            let (cell, px) = pr.as_ref()?;
            if px.depth > zbuf[*cell] + slack {
                return None;
            }
            let owner = points[i].object_id.as_ref();
            let hidden = boxes.iter().any(|b| {
                Some(&b.object.object_id) != owner
                    && b.entry(&points[i].position).is_some_and(|s| (1.0 - s) * px.depth > slack)
            });
            (!hidden).then_some(i)
        })
        .collect()
}

/// Bounding box of the projected box corners, with edges crossing the
/// camera plane cut at a small positive depth.
fn corner_bounds(k: &CameraIntrinsics, pose: &Pose, object: &SceneObject) -> Option<PixelBounds> {
    const NEAR: f64 = 1e-3;
    let cam: Vec<Vec3> = object.corners().iter().map(|c| world_to_camera(pose, c)).collect();
    if cam.iter().all(|c| c.z <= NEAR) {
        return None;
    }
    let mut bounds = PixelBounds::empty();
    let mut add = |c: &Vec3| {
        if let Ok(px) = project_camera_point(k, c) {
            bounds.add(px.u, px.v);
        }
    };
    for c in cam.iter().filter(|c| c.z > NEAR) {
        add(c);
    }
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            let j = i | bit;
            if j == i {
                continue;
            }
            let (a, b) = (cam[i], cam[j]);
            if (a.z > NEAR) != (b.z > NEAR) {
                let s = (NEAR - a.z) / (b.z - a.z);
                add(&(a + (b - a) * s));
            }
        }
    }
    Some(bounds)
}

fn finish_record(frame: &Frame, object: &SceneObject, projected: Box2D, visible: Option<Box2D>) -> VisibilityRecord {
    let visible = visible.map(|v| projected.intersect(&v)).filter(|v| v.area() > 0.0);
    let (ratio, area_fraction) = match &visible {
        Some(v) => {
            let pa = projected.area();
            let ratio = if pa > 0.0 { (v.area() / pa).min(1.0) } else { 1.0 };
            (ratio, v.area())
        }
        None => (0.0, 0.0),
    };
    VisibilityRecord {
        frame_id: frame.frame_id.clone(),
        object_id: object.object_id.clone(),
        projected_bbox: projected,
        visible_bbox: visible,
        visible_ratio: ratio,
        area_fraction,
    }
}

fn point_based_record(
    frame: &Frame,
    object: &SceneObject,
    own_points: &[&LabeledPoint],
    visible: &BTreeSet<PointId>,
) -> Result<VisibilityRecord, VisibilityError> {
    let k = &frame.intrinsics;
    let mut full = PixelBounds::empty();
    let mut seen = PixelBounds::empty();
    for p in own_points {
        let Ok(px) = project_point(k, &frame.pose, &p.position) else {
            continue;
        };
        full.add(px.u, px.v);
        if visible.contains(&p.point_id) {
            seen.add(px.u, px.v);
        }
    }
    if full.is_empty() {
        return Err(VisibilityError::NotProjectable(object.object_id.clone()));
    }
    let visible_box = (!seen.is_empty()).then(|| seen.normalized(k));
    Ok(finish_record(frame, object, full.normalized(k), visible_box))
}

fn box_based_record(
    frame: &Frame,
    object: &SceneObject,
    scene: &Scene,
    policy: &OcclusionPolicy,
) -> Result<VisibilityRecord, VisibilityError> {
    let k = &frame.intrinsics;
    let full = corner_bounds(k, &frame.pose, object)
        .ok_or_else(|| VisibilityError::NotProjectable(object.object_id.clone()))?;
    let projected = full.normalized(k);
    if projected.area() <= 0.0 {
        return Ok(finish_record(frame, object, projected, None));
    }

    let camera = frame.pose.position();
    let own = BoxOccluder::new(object, &camera);
    if own.camera_inside {
        return Ok(finish_record(frame, object, projected, None));
    }
    let others: Vec<BoxOccluder> = scene
        .objects
        .iter()
        .filter(|o| o.object_id != object.object_id)
        .map(|o| BoxOccluder::new(o, &camera))
        .collect();

    let ds = policy.downsample.max(1) as f64;
    let (w, h) = (k.width as f64, k.height as f64);
    let (c0, c1) = ((projected.x1 * w / ds).floor() as i64, (projected.x2 * w / ds).ceil() as i64);
    let (r0, r1) = ((projected.y1 * h / ds).floor() as i64, (projected.y2 * h / ds).ceil() as i64);
    let mut seen = PixelBounds::empty();
    // Far point along each cell ray; segments are cast camera → far point.
    const FAR: f64 = 1e4;
    for r in r0..r1 {
        for c in c0..c1 {
            let (u, v) = ((c as f64 + 0.5) * ds, (r as f64 + 0.5) * ds);
            if u >= w || v >= h {
                continue;
            }
            let ray_cam = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let far = frame.pose.apply(&(ray_cam * FAR));
            let Some(s_own) = own.entry(&far) else {
                continue;
            };
            let hidden = others.iter().any(|b| b.entry(&far).is_some_and(|s| (s_own - s) * FAR > policy.depth_slack_m));
            if !hidden {
                seen.add(c as f64 * ds, r as f64 * ds);
                seen.add(((c + 1) as f64 * ds).min(w), ((r + 1) as f64 * ds).min(h));
            }
        }
    }
    let visible = (!seen.is_empty()).then(|| seen.normalized(k));
    Ok(finish_record(frame, object, projected, visible))
}

/// Visibility of one object in one frame. Labeled points, when the object
/// has any, decide visibility; otherwise its box surface is ray cast.
pub fn object_visibility(
    frame: &Frame,
    object: &SceneObject,
    scene: &Scene,
    policy: &OcclusionPolicy,
) -> Result<VisibilityRecord, VisibilityError> {
    let by_object = scene.points_by_object();
    match by_object.get(&object.object_id) {
        Some(own) if !own.is_empty() => {
            let points = scene.points.as_deref().unwrap_or_default();
            let visible = visible_point_set(frame, points, &scene.objects, policy);
            point_based_record(frame, object, own, &visible)
        }
        _ => box_based_record(frame, object, scene, policy),
    }
}

/// Everything visibility-related for one frame, computed in one pass.
#[derive(Debug, Clone, Default)]
pub struct FrameVisibility {
    pub visible_points: BTreeSet<PointId>,
    /// Records for objects that project into the frame.
    pub records: BTreeMap<ObjectId, VisibilityRecord>,
}

pub fn frame_visibility(frame: &Frame, scene: &Scene, policy: &OcclusionPolicy) -> FrameVisibility {
    let points = scene.points.as_deref().unwrap_or_default();
    let visible_points =
        if points.is_empty() { BTreeSet::new() } else { visible_point_set(frame, points, &scene.objects, policy) };
    let by_object = scene.points_by_object();
    let records = scene
        .objects
        .iter()
        .filter_map(|o| {
            let rec = match by_object.get(&o.object_id) {
                Some(own) if !own.is_empty() => point_based_record(frame, o, own, &visible_points),
                _ => box_based_record(frame, o, scene, policy),
            };
            rec.ok().map(|r| (o.object_id.clone(), r))
        })
        .collect();
    FrameVisibility { visible_points, records }
}

/// Alignment of each face normal with the direction toward the camera.
pub fn face_alignment(object: &SceneObject, camera_pos: &Vec3) -> Result<[(ObjectSide, f64); 6], VisibilityError> {
    if !object.has_canonical_orientation {
        return Err(VisibilityError::NoCanonicalOrientation(object.object_id.clone()));
    }
    if object.contains(camera_pos) {
        return Err(VisibilityError::CameraInsideObject(object.object_id.clone()));
    }
    let dir = (camera_pos - object.obb_center).normalize();
    Ok(ObjectSide::ALL.map(|side| (side, object.obb_rotation.apply(&side.local_normal()).dot(&dir))))
}

/// Face whose outward normal points most directly at the camera. Scores
/// within 1e-6 of each other resolve in [`ObjectSide::ALL`] order.
pub fn primary_visible_side(object: &SceneObject, camera_pos: &Vec3) -> Result<ObjectSide, VisibilityError> {
    let scores = face_alignment(object, camera_pos)?;
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.1 > best.1 + 1e-6 {
            best = *s;
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use crate::scene::{CameraIntrinsics, SceneId};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn frame_at(pose: Pose, k: CameraIntrinsics) -> Frame {
        Frame { frame_id: "f".into(), seq_index: 0, intrinsics: k, pose, image_ref: None }
    }

    fn boxed(id: &str, center: Vec3, half: Vec3) -> SceneObject {
        SceneObject {
            object_id: id.into(),
            category: id.into(),
            instance_group: id.into(),
            obb_center: center,
            obb_half_extents: half,
            obb_rotation: Rotation::identity(),
            has_canonical_orientation: true,
        }
    }

    fn pt(id: u64, p: Vec3, obj: Option<&str>) -> LabeledPoint {
        LabeledPoint { point_id: PointId(id), position: p, object_id: obj.map(Into::into) }
    }

    #[test]
    fn projection_examples() {
        let k = k100();
        let id = Pose::identity();
        let p = project_point(&k, &id, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 1.0));
        let p = project_point(&k, &id, &Vec3::new(0.5, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (100.0, 50.0, 1.0));
        assert!(matches!(
            project_point(&k, &id, &Vec3::new(0.0, 0.0, -1.0)),
            Err(VisibilityError::BehindCamera { .. })
        ));
    }

    #[test]
    fn point_set_basics() {
        let f = frame_at(Pose::identity(), k100());
        let policy = OcclusionPolicy::default();
        let on_axis = [pt(1, Vec3::new(0.0, 0.0, 1.0), None)];
        assert_eq!(visible_point_set(&f, &on_axis, &[], &policy), BTreeSet::from([PointId(1)]));
        let behind = [pt(2, Vec3::new(0.0, 0.0, -1.0), None)];
        assert!(visible_point_set(&f, &behind, &[], &policy).is_empty());
    }

    /// Full-resolution depth buffer over projected points: a point survives
    /// when nothing in its pixel is nearer by more than the slack.
    fn brute_force_zbuffer(f: &Frame, points: &[LabeledPoint], slack: f64) -> BTreeSet<PointId> {
        let k = &f.intrinsics;
        let mut best: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        let mut proj = Vec::new();
        for p in points {
            let c = f.pose.inverse().apply(&p.position);
            if c.z <= 0.0 {
                continue;
            }
            let (u, v) = (k.cx + k.fx * c.x / c.z, k.cy + k.fy * c.y / c.z);
            if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
                continue;
            }
            let cell = (u.floor() as i64, v.floor() as i64);
            let e = best.entry(cell).or_insert(f64::INFINITY);
            *e = e.min(c.z);
            proj.push((p.point_id, cell, c.z));
        }
        proj.into_iter().filter(|(_, cell, z)| *z <= best[cell] + slack).map(|(id, _, _)| id).collect()
    }

    #[test]
    fn depth_buffer_keeps_nearer_point() {
        let f = frame_at(Pose::identity(), k100());
        let points = [pt(1, Vec3::new(0.1, 0.0, 1.0), None), pt(2, Vec3::new(0.2, 0.0, 2.0), None)];
        let policy = OcclusionPolicy { downsample: 1, depth_slack_m: 0.05 };
        let got = visible_point_set(&f, &points, &[], &policy);
        assert_eq!(got, brute_force_zbuffer(&f, &points, 0.05));
        assert_eq!(got, BTreeSet::from([PointId(1)]));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud: Vec<LabeledPoint> = (0..400)
            .map(|i| {
                let z = rng.gen_range(0.5..4.0);
                pt(i, Vec3::new(rng.gen_range(-0.2..0.2) * z, rng.gen_range(-0.2..0.2) * z, z), None)
            })
            .collect();
        assert_eq!(visible_point_set(&f, &cloud, &[], &policy), brute_force_zbuffer(&f, &cloud, 0.05));
    }

    #[allow(clippy::too_many_arguments)]
    fn grid_points(obj: &str, start: u64, x0: f64, x1: f64, y0: f64, y1: f64, z: f64, n: usize) -> Vec<LabeledPoint> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
                let y = y0 + (y1 - y0) * j as f64 / (n - 1) as f64;
                out.push(pt(start + (i * n + j) as u64, Vec3::new(x, y, z), Some(obj)));
            }
        }
        out
    }

    /// Object = plane of points at z = 4 spanning x ∈ [-1, 1]; a wall box at
    /// z = 2 covers the half-space x < 0 of the line of sight.
    fn half_occluded_scene(with_wall: bool) -> Scene {
        let k = CameraIntrinsics::new(200.0, 200.0, 200.0, 200.0, 400, 400).unwrap();
        let target = boxed("target", Vec3::new(0.0, 0.0, 4.0), Vec3::new(1.0, 1.0, 0.01));
        let wall = boxed("wall", Vec3::new(-1.0, 0.0, 2.0), Vec3::new(1.0, 2.0, 0.02));
        let mut points = grid_points("target", 0, -1.0, 1.0, -1.0, 1.0, 4.0, 41);
        let mut objects = vec![target];
        if with_wall {
            points.extend(grid_points("wall", 10_000, -2.0, -0.001, -2.0, 2.0, 1.98, 21));
            objects.push(wall);
        }
        Scene {
            scene_id: SceneId("half".into()),
            frames: vec![frame_at(Pose::identity(), k)],
            objects,
            points: Some(points),
        }
    }

    #[test]
    fn unoccluded_object_is_fully_visible() {
        let scene = half_occluded_scene(false);
        let rec = object_visibility(&scene.frames[0], &scene.objects[0], &scene, &OcclusionPolicy::default()).unwrap();
        assert_abs_diff_eq!(rec.visible_ratio, 1.0, epsilon = 1e-12);
        assert!(rec.projected_bbox.contains_box(rec.visible_bbox.as_ref().unwrap(), 1e-12));
    }

    #[test]
    fn half_occluded_object() {
        let scene = half_occluded_scene(true);
        let rec = object_visibility(&scene.frames[0], &scene.objects[0], &scene, &OcclusionPolicy::default()).unwrap();

        // Oracle: rasterize the wall rectangle at full resolution and count
        // which of the target's points fall behind it; the visible box is
        // the bounding box of the rest.
        let f = &scene.frames[0];
        let k = &f.intrinsics;
        let wall = &scene.objects[1];
        let (wx0, wx1) = (wall.obb_center.x - wall.obb_half_extents.x, wall.obb_center.x + wall.obb_half_extents.x);
        let wz = wall.obb_center.z - wall.obb_half_extents.z;
        let mut bounds = PixelBounds::empty();
        let mut full = PixelBounds::empty();
        for p in scene.points.as_ref().unwrap().iter().filter(|p| p.object_id.as_ref().unwrap().0 == "target") {
            let u = k.cx + k.fx * p.position.x / p.position.z;
            let v = k.cy + k.fy * p.position.y / p.position.z;
            full.add(u, v);
            let x_at_wall = p.position.x * wz / p.position.z;
            if !(wx0..=wx1).contains(&x_at_wall) {
                bounds.add(u, v);
            }
        }
        let expected = bounds.normalized(k).area() / full.normalized(k).area();
        assert!((expected - 0.5).abs() <= 0.05, "oracle {expected}");
        assert!((rec.visible_ratio - 0.5).abs() <= 0.05, "got {}", rec.visible_ratio);
        assert_abs_diff_eq!(rec.visible_ratio, expected, epsilon = 0.03);
    }

    #[test]
    fn removing_occluder_never_lowers_visibility() {
        let with = half_occluded_scene(true);
        let without = half_occluded_scene(false);
        let p = OcclusionPolicy::default();
        let a = object_visibility(&with.frames[0], &with.objects[0], &with, &p).unwrap();
        let b = object_visibility(&without.frames[0], &without.objects[0], &without, &p).unwrap();
        assert!(b.visible_ratio >= a.visible_ratio);

        // Same property on the box-only path.
        let mut boxes_with = with.clone();
        boxes_with.points = None;
        let mut boxes_without = without.clone();
        boxes_without.points = None;
        let a = object_visibility(&boxes_with.frames[0], &boxes_with.objects[0], &boxes_with, &p).unwrap();
        let b = object_visibility(&boxes_without.frames[0], &boxes_without.objects[0], &boxes_without, &p).unwrap();
        assert!(b.visible_ratio >= a.visible_ratio);
        assert!(a.visible_ratio > 0.3 && a.visible_ratio < 0.7, "box path ratio {}", a.visible_ratio);
    }

    #[test]
    fn object_behind_camera_is_not_projectable() {
        let mut scene = half_occluded_scene(false);
        // Turn the camera around so it looks along -z.
        scene.frames[0].pose = Pose::new(Rotation::from_axis_angle(&Vec3::x(), std::f64::consts::PI), Vec3::zeros());
        let err = object_visibility(&scene.frames[0], &scene.objects[0], &scene, &OcclusionPolicy::default());
        assert_eq!(err, Err(VisibilityError::NotProjectable("target".into())));
        scene.points = None;
        let err = object_visibility(&scene.frames[0], &scene.objects[0], &scene, &OcclusionPolicy::default());
        assert_eq!(err, Err(VisibilityError::NotProjectable("target".into())));
    }

    #[test]
    fn visible_side_examples() {
        let obj = boxed("chair", Vec3::zeros(), Vec3::new(0.4, 0.4, 0.5));
        assert_eq!(primary_visible_side(&obj, &Vec3::new(0.0, 3.0, 0.0)).unwrap(), ObjectSide::Front);
        assert_eq!(primary_visible_side(&obj, &Vec3::new(0.0, 0.0, 3.0)).unwrap(), ObjectSide::Top);

        // 40° from +y' toward +x': dot with front cos40 > right cos50.
        let a = 40f64.to_radians();
        let cam = Vec3::new(3.0 * a.sin(), 3.0 * a.cos(), 0.0);
        let scores = face_alignment(&obj, &cam).unwrap();
        let oracle =
            scores.iter().cloned().fold((ObjectSide::Bottom, f64::NEG_INFINITY), |b, s| if s.1 > b.1 { s } else { b });
        assert_eq!(oracle.0, ObjectSide::Front);
        assert_abs_diff_eq!(scores[0].1, 40f64.to_radians().cos(), epsilon = 1e-12);
        assert_eq!(primary_visible_side(&obj, &cam).unwrap(), ObjectSide::Front);

        let mut flat = obj.clone();
        flat.has_canonical_orientation = false;
        assert!(matches!(primary_visible_side(&flat, &cam), Err(VisibilityError::NoCanonicalOrientation(_))));
        assert!(matches!(
            primary_visible_side(&obj, &Vec3::new(0.1, 0.0, 0.0)),
            Err(VisibilityError::CameraInsideObject(_))
        ));
    }

    #[test]
    fn visible_side_on_every_normal_ray_and_rigid_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rot = Rotation::from_axis_angle(
                &Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)),
                rng.gen_range(-3.0..3.0),
            );
            let mut obj = boxed("o", Vec3::new(rng.gen_range(-3.0..3.0), 1.0, 0.5), Vec3::new(0.5, 0.3, 0.4));
            obj.obb_rotation = rot;
            for side in ObjectSide::ALL {
                let cam = obj.obb_center + rot.apply(&side.local_normal()) * 4.0;
                assert_eq!(primary_visible_side(&obj, &cam).unwrap(), side);
            }
            let cam = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            if obj.contains(&cam) {
                continue;
            }
            let g = Pose::new(
                Rotation::from_axis_angle(&Vec3::new(0.3, -0.2, 1.0), rng.gen_range(-3.0..3.0)),
                Vec3::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)),
            );
            let mut moved = obj.clone();
            moved.obb_center = g.apply(&obj.obb_center);
            moved.obb_rotation = g.rotation.then(&obj.obb_rotation);
            assert_eq!(
                primary_visible_side(&obj, &cam).unwrap(),
                primary_visible_side(&moved, &g.apply(&cam)).unwrap()
            );
        }
    }

    #[test]
    fn box_formatting() {
        let b = Box2D { x1: 0.09, y1: 0.0, x2: 0.6666, y2: 0.98 };
        assert_eq!(b.render(), "[0.09, 0.0, 0.67, 0.98]");
    }
}
