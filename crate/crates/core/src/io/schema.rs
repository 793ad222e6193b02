//! Native scene JSON schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::{GeometryError, Pose, Rotation, Vec3};
use crate::scene::{CameraIntrinsics, Frame, LabeledPoint, PointId, Scene, SceneObject};

/// Rotations within this Frobenius distance of orthonormal are snapped.
pub const SNAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene_id: String,
    pub frames: Vec<FrameRecord>,
    pub objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: String,
    pub seq_index: i64,
    pub intrinsics: IntrinsicsRecord,
    pub pose: PoseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub object_id: String,
    pub category: String,
    pub instance_group: String,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub rotation: [f64; 9],
    pub canonical: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub point_id: u64,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<String>,
}

fn rotation(values: &[f64; 9], file: &str, field: String) -> Result<Rotation, IoError> {
    match Rotation::from_row_major(values, SNAP_TOLERANCE) {
        Ok(r) => Ok(r),
        Err(GeometryError::Reflection { det }) => Err(IoError::Schema {
            file: file.to_owned(),
            field,
            line: None,
            message: format!("rotation has determinant {det:.4}; a proper rotation is required"),
        }),
        Err(e) => Err(IoError::Invariant { file: file.to_owned(), message: format!("{field}: {e}") }),
    }
}

impl SceneFile {
    pub fn into_scene(self, file: &str) -> Result<Scene, IoError> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.into_iter().enumerate() {
            let k = &f.intrinsics;
            let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height).map_err(|e| {
                IoError::Invariant { file: file.to_owned(), message: format!("frames[{i}].intrinsics: {e}") }
            })?;
            let r = rotation(&f.pose.rotation, file, format!("frames[{i}].pose.rotation"))?;
            frames.push(Frame {
                frame_id: f.frame_id.into(),
                seq_index: f.seq_index,
                intrinsics,
                pose: Pose::new(r, Vec3::from(f.pose.translation)),
                image_ref: f.image_ref,
            });
        }
        let mut objects = Vec::with_capacity(self.objects.len());
        for (i, o) in self.objects.into_iter().enumerate() {
            objects.push(SceneObject {
                obb_rotation: rotation(&o.rotation, file, format!("objects[{i}].rotation"))?,
                object_id: o.object_id.into(),
                category: o.category,
                instance_group: o.instance_group.into(),
                obb_center: Vec3::from(o.center),
                obb_half_extents: Vec3::from(o.half_extents),
                has_canonical_orientation: o.canonical,
            });
        }
        let points = self.points.map(|ps| {
            ps.into_iter()
                .map(|p| LabeledPoint {
                    point_id: PointId(p.point_id),
                    position: Vec3::from(p.position),
                    object_id: p.object_id.map(Into::into),
                })
                .collect()
        });
        let scene = Scene { scene_id: self.scene_id.into(), frames, objects, points };
        scene.validate().map_err(|e| IoError::Invariant { file: file.to_owned(), message: e.to_string() })?;
        Ok(scene)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        SceneFile {
            scene_id: scene.scene_id.0.clone(),
            frames: scene
                .frames
                .iter()
                .map(|f| FrameRecord {
                    frame_id: f.frame_id.0.clone(),
                    seq_index: f.seq_index,
                    intrinsics: IntrinsicsRecord {
                        fx: f.intrinsics.fx,
                        fy: f.intrinsics.fy,
                        cx: f.intrinsics.cx,
                        cy: f.intrinsics.cy,
                        width: f.intrinsics.width,
                        height: f.intrinsics.height,
                    },
                    pose: PoseRecord {
                        rotation: f.pose.rotation.to_row_major(),
                        translation: f.pose.translation.into(),
                    },
                    image_ref: f.image_ref.clone(),
                })
                .collect(),
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    object_id: o.object_id.0.clone(),
                    category: o.category.clone(),
                    instance_group: o.instance_group.0.clone(),
                    center: o.obb_center.into(),
                    half_extents: o.obb_half_extents.into(),
                    rotation: o.obb_rotation.to_row_major(),
                    canonical: o.has_canonical_orientation,
                })
                .collect(),
            points: scene.points.as_ref().map(|ps| {
                ps.iter()
                    .map(|p| PointRecord {
                        point_id: p.point_id.0,
                        position: p.position.into(),
                        object_id: p.object_id.as_ref().map(|o| o.0.clone()),
                    })
                    .collect()
            }),
        }
    }
}

/// Parses and fully validates a scene document.
pub fn parse_scene(text: &str, file: &str) -> Result<Scene, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: SceneFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.inner();
        IoError::Schema { file: file.to_owned(), field, line: Some(inner.line()), message: inner.to_string() }
    })?;
    parsed.into_scene(file)
}

pub fn ingest_scene(path: &Path) -> Result<Scene, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_scene(&text, &path.display().to_string())
}

pub fn scene_to_json(scene: &Scene) -> String {
    serde_json::to_string_pretty(&SceneFile::from_scene(scene)).expect("scene serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_scene, SynthConfig};

    #[test]
    fn round_trip() {
        let s = synth_scene("rt", &SynthConfig { n_frames: 3, n_objects: 3, ..Default::default() }, 1);
        let back = parse_scene(&scene_to_json(&s), "rt.json").unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.objects.len(), s.objects.len());
        for (a, b) in s.frames.iter().zip(&back.frames) {
            assert!((a.pose.rotation.matrix() - b.pose.rotation.matrix()).norm() < 1e-12);
        }
    }

    fn doc(rotation: &str) -> String {
        format!(
            r#"{{"scene_id":"s","frames":[{{"frame_id":"f","seq_index":0,
            "intrinsics":{{"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480}},
            "pose":{{"rotation":{rotation},"translation":[0,0,0]}}}}],"objects":[]}}"#
        )
    }

    #[test]
    fn reflection_is_schema_violation() {
        let err = parse_scene(&doc("[-1,0,0, 0,1,0, 0,0,1]"), "x").unwrap_err();
        assert!(matches!(err, IoError::Schema { ref field, .. } if field == "frames[0].pose.rotation"), "{err}");
    }

    #[test]
    fn near_orthonormal_is_snapped_and_far_is_invariant_violation() {
        let s = parse_scene(&doc("[1.0002,0,0, 0,1,0, 0,0,0.9999]"), "x").unwrap();
        assert!((s.frames[0].pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        let err = parse_scene(&doc("[1.2,0,0, 0,1,0, 0,0,1]"), "x").unwrap_err();
        assert!(matches!(err, IoError::Invariant { .. }), "{err}");
    }

    #[test]
    fn missing_intrinsics_names_field() {
        let text = r#"{"scene_id":"s","frames":[{"frame_id":"f","seq_index":0,
            "pose":{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0]}}],"objects":[]}"#;
        match parse_scene(text, "x").unwrap_err() {
            IoError::Schema { field, message, line, .. } => {
                assert!(message.contains("intrinsics"), "{message}");
                assert!(field.starts_with("frames[0]"), "{field}");
                assert_eq!(line, Some(2));
            }
            e => panic!("{e}"),
        }
    }
}
