//! Scene containers: posed frames, oriented objects and labeled points.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Rotation, Vec3};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(SceneId);
string_id!(FrameId);
string_id!(ObjectId);
string_id!(InstanceGroup);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("scene has no frames")]
    NoFrames,
    #[error("duplicate frame id {0}")]
    DuplicateFrame(FrameId),
    #[error("seq_index must increase strictly (frame {0})")]
    SeqOrder(FrameId),
    #[error("duplicate object id {0}")]
    DuplicateObject(ObjectId),
    #[error("object {0} has non-positive half extents")]
    BadExtents(ObjectId),
    #[error("duplicate point id {0}")]
    DuplicatePoint(u64),
    #[error("point {point} references unknown object {object}")]
    DanglingPoint { point: u64, object: ObjectId },
    #[error("non-finite coordinate in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, SceneError> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Centered principal point and a square focal length giving `hfov_deg`.
    pub fn from_fov(width: u32, height: u32, hfov_deg: f64) -> Self {
        let f = width as f64 / 2.0 / (hfov_deg.to_radians() / 2.0).tan();
        CameraIntrinsics { fx: f, fy: f, cx: width as f64 / 2.0, cy: height as f64 / 2.0, width, height }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(SceneError::Intrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(SceneError::Intrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::Intrinsics("image size must be positive".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(SceneError::Intrinsics("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn image_area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: FrameId,
    pub seq_index: i64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub object_id: ObjectId,
    pub category: String,
    pub instance_group: InstanceGroup,
    pub obb_center: Vec3,
    pub obb_half_extents: Vec3,
    pub obb_rotation: Rotation,
    pub has_canonical_orientation: bool,
}

impl SceneObject {
    /// World-from-object transform of the bounding box.
    pub fn obb_pose(&self) -> Pose {
        Pose::new(self.obb_rotation, self.obb_center)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let pose = self.obb_pose();
        let h = self.obb_half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = pose.apply(&Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.obb_half_extents.x * self.obb_half_extents.y * self.obb_half_extents.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let local = crate::geometry::world_to_camera(&self.obb_pose(), p);
        (0..3).all(|i| local[i].abs() <= self.obb_half_extents[i])
    }

    /// Human-readable handle used in question text and traces.
    pub fn display_name(&self) -> String {
        self.category.clone()
    }

    /// Name that stays unique within a scene (`category_id`).
    pub fn tagged_name(&self) -> String {
        format!("{}_{}", self.category, self.object_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub point_id: PointId,
    pub position: Vec3,
    pub object_id: Option<ObjectId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: SceneId,
    pub frames: Vec<Frame>,
    pub objects: Vec<SceneObject>,
    pub points: Option<Vec<LabeledPoint>>,
}

impl Scene {
    /// Checks every structural invariant of the scene.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frames.is_empty() {
            return Err(SceneError::NoFrames);
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut last_seq: Option<i64> = None;
        for f in &self.frames {
            f.intrinsics.validate()?;
            if !seen.insert(&f.frame_id) {
                return Err(SceneError::DuplicateFrame(f.frame_id.clone()));
            }
            if last_seq.is_some_and(|s| f.seq_index <= s) {
                return Err(SceneError::SeqOrder(f.frame_id.clone()));
            }
            last_seq = Some(f.seq_index);
            if !f.pose.translation.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFinite(format!("frame {}", f.frame_id)));
            }
        }
        let mut objects = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !objects.insert(&o.object_id) {
                return Err(SceneError::DuplicateObject(o.object_id.clone()));
            }
            if o.obb_half_extents.iter().any(|h| h.is_nan() || *h <= 0.0) {
                return Err(SceneError::BadExtents(o.object_id.clone()));
            }
            if !o.obb_center.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFinite(format!("object {}", o.object_id)));
            }
        }
        if let Some(points) = &self.points {
            let mut ids = std::collections::BTreeSet::new();
            for p in points {
                if !ids.insert(p.point_id) {
                    return Err(SceneError::DuplicatePoint(p.point_id.0));
                }
                if let Some(obj) = &p.object_id {
                    if !objects.contains(obj) {
                        return Err(SceneError::DanglingPoint { point: p.point_id.0, object: obj.clone() });
                    }
                }
                if !p.position.iter().all(|v| v.is_finite()) {
                    return Err(SceneError::NonFinite(format!("point {}", p.point_id.0)));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, id: &FrameId) -> Option<&Frame> {
        self.frames.iter().find(|f| &f.frame_id == id)
    }

    pub fn frame_index(&self, id: &FrameId) -> Option<usize> {
        self.frames.iter().position(|f| &f.frame_id == id)
    }

    pub fn object(&self, id: &ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| &o.object_id == id)
    }

    pub fn has_points(&self) -> bool {
        self.points.as_ref().is_some_and(|p| !p.is_empty())
    }

    /// Labeled points grouped by owning object.
    pub fn points_by_object(&self) -> BTreeMap<ObjectId, Vec<&LabeledPoint>> {
        let mut out: BTreeMap<ObjectId, Vec<&LabeledPoint>> = BTreeMap::new();
        for p in self.points.iter().flatten() {
            if let Some(o) = &p.object_id {
                out.entry(o.clone()).or_default().push(p);
            }
        }
        out
    }

    /// Applies a rigid motion to every pose, box and point.
    pub fn transformed(&self, g: &Pose) -> Scene {
        let mut out = self.clone();
        for f in &mut out.frames {
            f.pose = crate::geometry::compose_pose(g, &f.pose);
        }
        for o in &mut out.objects {
            o.obb_center = g.apply(&o.obb_center);
            o.obb_rotation = g.rotation.then(&o.obb_rotation);
        }
        for p in out.points.iter_mut().flatten() {
            p.position = g.apply(&p.position);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: &str, seq: i64) -> Frame {
        Frame {
            frame_id: id.into(),
            seq_index: seq,
            intrinsics: CameraIntrinsics::from_fov(640, 480, 60.0),
            pose: Pose::identity(),
            image_ref: None,
        }
    }

    fn object(id: &str) -> SceneObject {
        SceneObject {
            object_id: id.into(),
            category: "chair".into(),
            instance_group: id.into(),
            obb_center: Vec3::zeros(),
            obb_half_extents: Vec3::new(0.5, 0.5, 0.5),
            obb_rotation: Rotation::identity(),
            has_canonical_orientation: true,
        }
    }

    #[test]
    fn intrinsics_bounds() {
        assert!(CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).is_ok());
        assert!(CameraIntrinsics::new(0.0, 100.0, 50.0, 50.0, 100, 100).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 150.0, 50.0, 100, 100).is_err());
    }

    #[test]
    fn scene_invariants() {
        let mut scene = Scene {
            scene_id: "s".into(),
            frames: vec![frame("a", 0), frame("b", 1)],
            objects: vec![object("o1")],
            points: Some(vec![LabeledPoint {
                point_id: PointId(0),
                position: Vec3::zeros(),
                object_id: Some("o1".into()),
            }]),
        };
        assert!(scene.validate().is_ok());

        scene.frames[1].seq_index = 0;
        assert_eq!(scene.validate(), Err(SceneError::SeqOrder("b".into())));
        scene.frames[1].seq_index = 2;

        scene.points.as_mut().unwrap()[0].object_id = Some("ghost".into());
        assert!(matches!(scene.validate(), Err(SceneError::DanglingPoint { .. })));
        scene.points = None;

        scene.objects[0].obb_half_extents.y = 0.0;
        assert_eq!(scene.validate(), Err(SceneError::BadExtents("o1".into())));
        scene.objects.clear();
        scene.frames.clear();
        assert_eq!(scene.validate(), Err(SceneError::NoFrames));
    }

    #[test]
    fn box_corners_and_containment() {
        let mut o = object("o");
        o.obb_center = Vec3::new(1.0, 2.0, 3.0);
        o.obb_half_extents = Vec3::new(1.0, 0.5, 0.25);
        let corners = o.corners();
        assert_eq!(corners.len(), 8);
        assert!(corners.iter().all(|c| (c.x - 1.0).abs() == 1.0 && (c.z - 3.0).abs() == 0.25));
        assert!(o.contains(&Vec3::new(1.5, 2.2, 3.1)));
        assert!(!o.contains(&Vec3::new(1.5, 2.6, 3.1)));
        assert!((o.volume() - 1.0).abs() < 1e-12);
    }
}
