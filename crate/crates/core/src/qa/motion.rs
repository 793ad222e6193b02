//! Relative camera motion in the first camera's levelled frame, and its
//! verbal description.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_deg_180, PlanarPose, Pose};

/// Motion from camera A to camera B: translation in A's levelled frame
/// (right, forward, up), heading change (CCW positive) and pitch change
/// (up positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMotion {
    pub right_m: f64,
    pub forward_m: f64,
    pub up_m: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl CameraMotion {
    pub fn between(a: &Pose, b: &Pose) -> Self {
        let pa = PlanarPose::from_camera(a);
        let pb = PlanarPose::from_camera(b);
        let local = pa.to_local(pb.x, pb.y);
        CameraMotion {
            right_m: local.x,
            forward_m: local.y,
            up_m: b.translation.z - a.translation.z,
            yaw_deg: wrap_deg_180(pb.heading_deg - pa.heading_deg),
            pitch_deg: b.pitch_deg() - a.pitch_deg(),
        }
    }

    /// Labels for every component at or beyond its threshold.
    pub fn labels(&self, tau_t_m: f64, tau_r_deg: f64) -> Vec<MotionLabel> {
        let mut out = Vec::new();
        let pick = |v: f64, tau: f64, pos: MotionLabel, neg: MotionLabel| {
            if v >= tau {
                Some(pos)
            } else if v <= -tau {
                Some(neg)
            } else {
                None
            }
        };
        out.extend(pick(self.right_m, tau_t_m, MotionLabel::Right, MotionLabel::Left));
        out.extend(pick(self.forward_m, tau_t_m, MotionLabel::Forward, MotionLabel::Backward));
        out.extend(pick(self.up_m, tau_t_m, MotionLabel::Up, MotionLabel::Down));
        out.extend(pick(self.yaw_deg, tau_r_deg, MotionLabel::TurnLeft, MotionLabel::TurnRight));
        out.extend(pick(self.pitch_deg, tau_r_deg, MotionLabel::LookUp, MotionLabel::LookDown));
        out
    }

    /// True when some component lies within `band` (relative) of its
    /// threshold, where the label would hinge on measurement noise.
    pub fn near_threshold(&self, tau_t_m: f64, tau_r_deg: f64, band: f64) -> bool {
        let close = |v: f64, tau: f64| (v.abs() - tau).abs() < band * tau;
        close(self.right_m, tau_t_m)
            || close(self.forward_m, tau_t_m)
            || close(self.up_m, tau_t_m)
            || close(self.yaw_deg, tau_r_deg)
            || close(self.pitch_deg, tau_r_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionLabel {
    Left,
    Right,
    Forward,
    Backward,
    Up,
    Down,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Axis {
    Lateral,
    Longitudinal,
    Vertical,
    Yaw,
    Pitch,
}

impl MotionLabel {
    pub const ALL: [MotionLabel; 10] = [
        MotionLabel::Left,
        MotionLabel::Right,
        MotionLabel::Forward,
        MotionLabel::Backward,
        MotionLabel::Up,
        MotionLabel::Down,
        MotionLabel::TurnLeft,
        MotionLabel::TurnRight,
        MotionLabel::LookUp,
        MotionLabel::LookDown,
    ];

    fn axis(&self) -> Axis {
        match self {
            MotionLabel::Left | MotionLabel::Right => Axis::Lateral,
            MotionLabel::Forward | MotionLabel::Backward => Axis::Longitudinal,
            MotionLabel::Up | MotionLabel::Down => Axis::Vertical,
            MotionLabel::TurnLeft | MotionLabel::TurnRight => Axis::Yaw,
            MotionLabel::LookUp | MotionLabel::LookDown => Axis::Pitch,
        }
    }

    pub fn flipped(&self) -> MotionLabel {
        match self {
            MotionLabel::Left => MotionLabel::Right,
            MotionLabel::Right => MotionLabel::Left,
            MotionLabel::Forward => MotionLabel::Backward,
            MotionLabel::Backward => MotionLabel::Forward,
            MotionLabel::Up => MotionLabel::Down,
            MotionLabel::Down => MotionLabel::Up,
            MotionLabel::TurnLeft => MotionLabel::TurnRight,
            MotionLabel::TurnRight => MotionLabel::TurnLeft,
            MotionLabel::LookUp => MotionLabel::LookDown,
            MotionLabel::LookDown => MotionLabel::LookUp,
        }
    }

    fn is_translation(&self) -> bool {
        matches!(self.axis(), Axis::Lateral | Axis::Longitudinal | Axis::Vertical)
    }
}

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Canonical order: translation axes, then yaw, then pitch.
pub fn canonical_labels(labels: &[MotionLabel]) -> Vec<MotionLabel> {
    let mut v = labels.to_vec();
    v.sort_by_key(|l| l.axis());
    v.dedup_by_key(|l| l.axis());
    v
}

/// Verbal description. A lone longitudinal move reads "forward"/"backward";
/// combined with other translations it reads "front"/"back". With
/// `rotation_step_deg`, turns and tilts carry their magnitude quantized to
/// that step.
pub fn describe_motion(labels: &[MotionLabel], motion: Option<(&CameraMotion, f64)>) -> String {
    let labels = canonical_labels(labels);
    if labels.is_empty() {
        return "does not move significantly".to_owned();
    }
    let trans: Vec<&MotionLabel> = labels.iter().filter(|l| l.is_translation()).collect();
    let lone = trans.len() == 1;
    let words: Vec<String> = trans
        .iter()
        .map(|l| {
            match l {
                MotionLabel::Left => "left",
                MotionLabel::Right => "right",
                MotionLabel::Forward if lone => "forward",
                MotionLabel::Forward => "front",
                MotionLabel::Backward if lone => "backward",
                MotionLabel::Backward => "back",
                MotionLabel::Up => "up",
                _ => "down",
            }
            .to_owned()
        })
        .collect();
    let magnitude = |v: f64| match motion {
        Some((_, step)) if step > 0.0 => {
            format!(" {} degrees", ((v.abs() / step).round() * step) as i64)
        }
        _ => String::new(),
    };
    let rot: Vec<String> = labels
        .iter()
        .filter(|l| !l.is_translation())
        .map(|l| {
            let (yaw, pitch) = motion.map(|(m, _)| (m.yaw_deg, m.pitch_deg)).unwrap_or_default();
            match l {
                MotionLabel::TurnLeft => format!("rotates to left{}", magnitude(yaw)),
                MotionLabel::TurnRight => format!("rotates to right{}", magnitude(yaw)),
                MotionLabel::LookUp => format!("looks up{}", magnitude(pitch)),
                _ => format!("looks down{}", magnitude(pitch)),
            }
        })
        .collect();
    let mut parts = Vec::new();
    if !words.is_empty() {
        parts.push(format!("translates {}", join_and(&words)));
    }
    if !rot.is_empty() {
        parts.push(rot.join(" and "));
    }
    parts.join(", ")
}

/// Wrong label sets for distractors, most confusable first: single flips,
/// then double flips, then one extra component. Every candidate differs
/// from `correct`.
pub fn corrupted_label_sets(correct: &[MotionLabel]) -> Vec<Vec<Vec<MotionLabel>>> {
    let correct = canonical_labels(correct);
    let n = correct.len();
    let mut single = Vec::new();
    for i in 0..n {
        let mut v = correct.clone();
        v[i] = v[i].flipped();
        single.push(v);
    }
    let mut double = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut v = correct.clone();
            v[i] = v[i].flipped();
            v[j] = v[j].flipped();
            double.push(v);
        }
    }
    let used: Vec<Axis> = correct.iter().map(|l| l.axis()).collect();
    let mut extra = Vec::new();
    for l in MotionLabel::ALL {
        if !used.contains(&l.axis()) {
            let mut v = correct.clone();
            v.push(l);
            extra.push(canonical_labels(&v));
        }
    }
    vec![single, double, extra]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn forward_only() {
        let a = Pose::camera(Vec3::new(0.0, 0.0, 1.5), 0.0, 0.0);
        let b = Pose::camera(Vec3::new(0.0, 1.0, 1.5), 0.0, 0.0);
        let m = CameraMotion::between(&a, &b);
        assert_eq!(describe_motion(&m.labels(0.2, 10.0), None), "translates forward");
    }

    #[test]
    fn ccw_yaw_is_left() {
        let a = Pose::camera(Vec3::new(0.0, 0.0, 1.5), 0.0, 0.0);
        let b = Pose::camera(Vec3::new(0.0, 0.0, 1.5), 30.0, 0.0);
        let m = CameraMotion::between(&a, &b);
        assert!((m.yaw_deg - 30.0).abs() < 1e-9);
        assert_eq!(describe_motion(&m.labels(0.2, 10.0), None), "rotates to left");
    }

    #[test]
    fn combined_motion_phrase() {
        let m = CameraMotion { right_m: 0.3, forward_m: 0.5, up_m: 0.0, yaw_deg: -25.0, pitch_deg: 0.0 };
        assert_eq!(describe_motion(&m.labels(0.2, 10.0), None), "translates right and front, rotates to right");
    }

    #[test]
    fn quantized_magnitudes() {
        let m = CameraMotion { right_m: 0.0, forward_m: 1.0, up_m: 0.0, yaw_deg: 31.0, pitch_deg: -14.0 };
        assert_eq!(
            describe_motion(&m.labels(0.2, 10.0), Some((&m, 5.0))),
            "translates forward, rotates to left 30 degrees and looks down 15 degrees"
        );
    }

    #[test]
    fn no_motion() {
        let p = Pose::camera(Vec3::new(1.0, 2.0, 1.5), 40.0, -10.0);
        let m = CameraMotion::between(&p, &p);
        assert_eq!(describe_motion(&m.labels(0.2, 10.0), None), "does not move significantly");
    }

    #[test]
    fn motion_is_expressed_in_first_camera_frame() {
        // Camera A faces world -x (yaw 90); B sits 1 m further along -x.
        let a = Pose::camera(Vec3::new(0.0, 0.0, 1.5), 90.0, 0.0);
        let b = Pose::camera(Vec3::new(-1.0, 0.0, 1.5), 90.0, 0.0);
        let m = CameraMotion::between(&a, &b);
        assert!((m.forward_m - 1.0).abs() < 1e-9 && m.right_m.abs() < 1e-9);
    }

    #[test]
    fn corruptions_never_match_correct() {
        let correct = vec![MotionLabel::Right, MotionLabel::Forward, MotionLabel::TurnRight];
        let text = describe_motion(&correct, None);
        for tier in corrupted_label_sets(&correct) {
            for c in tier {
                assert_ne!(describe_motion(&c, None), text);
            }
        }
        let none = corrupted_label_sets(&[]);
        assert!(none[0].is_empty() && none[1].is_empty() && none[2].len() == 10);
    }
}
