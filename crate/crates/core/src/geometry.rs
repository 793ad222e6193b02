//! Rigid-body algebra and the planar direction classifiers.
//!
//! Conventions used across the crate:
//!
//! * World frame is z-up, meters. The ground plane is world x–y.
//! * Camera frame is x right, y down, z forward (pinhole).
//! * A [`Pose`] maps frame coordinates into the world (`world_from_frame`).
//! * Planar offsets are `(x, y)` with x to the right and y forward.
//! * Yaw is counterclockwise seen from above; positive yaw means "to the left".

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` for a rotation to be accepted as-is.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Offsets shorter than this have no meaningful bearing.
pub const MIN_OFFSET_NORM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("matrix has determinant {det:.6}, expected +1")]
    Reflection { det: f64 },
    #[error("non-finite value in geometric input")]
    NonFinite,
    #[error("offset ({x}, {y}) is too short to have a bearing")]
    DegenerateOffset { x: f64, y: f64 },
}

/// A proper rotation stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Accepts `m` only if it is orthonormal with determinant +1 to within
    /// [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        check_finite(m.iter())?;
        let det = m.determinant();
        if det < 0.0 {
            return Err(GeometryError::Reflection { det });
        }
        let deviation = orthonormal_deviation(&m);
        if deviation > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal { deviation });
        }
        Ok(Rotation(m))
    }

    /// Accepts `m` if it is within `tol` of a rotation and snaps it onto the
    /// nearest one (polar decomposition). Reflections are always rejected.
    pub fn from_matrix_snapped(m: Matrix3<f64>, tol: f64) -> Result<Self, GeometryError> {
        check_finite(m.iter())?;
        let det = m.determinant();
        if det <= 0.0 {
            return Err(GeometryError::Reflection { det });
        }
        let deviation = orthonormal_deviation(&m);
        if deviation > tol {
            return Err(GeometryError::NotOrthonormal { deviation });
        }
        if deviation <= ORTHONORMAL_TOL && (det - 1.0).abs() <= ORTHONORMAL_TOL {
            return Ok(Rotation(m));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let snapped = u * v_t;
        if snapped.determinant() < 0.0 {
            return Err(GeometryError::Reflection { det });
        }
        Ok(Rotation(snapped))
    }

    pub fn from_row_major(values: &[f64; 9], tol: f64) -> Result<Self, GeometryError> {
        Self::from_matrix_snapped(Matrix3::from_row_slice(values), tol)
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    /// Counterclockwise rotation about world +z.
    pub fn about_z(angle_rad: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle_rad)
    }

    pub fn from_axis_angle(axis: &Vec3, angle_rad: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle_rad);
        Rotation(*r.matrix())
    }

    /// Camera orientation (x right, y down, z forward) in a z-up world.
    ///
    /// `yaw_deg` turns the view counterclockwise from world +y, `pitch_deg`
    /// tilts it up (positive) or down (negative).
    pub fn camera_look(yaw_deg: f64, pitch_deg: f64) -> Self {
        let (yaw, pitch) = (yaw_deg.to_radians(), pitch_deg.to_radians());
        let forward = Vec3::new(-yaw.sin() * pitch.cos(), yaw.cos() * pitch.cos(), pitch.sin());
        let right = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
        let down = forward.cross(&right);
        Rotation(Matrix3::from_columns(&[right, down, forward]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn then(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Columns of the matrix, i.e. the frame axes expressed in the parent frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> Result<(), GeometryError> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

fn orthonormal_deviation(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Rigid transform mapping frame coordinates into the parent (world) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    /// Camera at `position` looking with the given yaw/pitch (see [`Rotation::camera_look`]).
    pub fn camera(position: Vec3, yaw_deg: f64, pitch_deg: f64) -> Self {
        Pose::new(Rotation::camera_look(yaw_deg, pitch_deg), position)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Pose::new(r_inv, -r_inv.apply(&self.translation))
    }

    pub fn position(&self) -> Vec3 {
        self.translation
    }

    /// Viewing direction (camera +z) in the parent frame.
    pub fn forward(&self) -> Vec3 {
        self.rotation.axis(2)
    }

    /// Elevation of the viewing direction above the ground plane, degrees.
    pub fn pitch_deg(&self) -> f64 {
        self.forward().z.clamp(-1.0, 1.0).asin().to_degrees()
    }
}

/// `a ∘ b`: transforming by the result equals transforming by `b`, then `a`.
pub fn compose_pose(a: &Pose, b: &Pose) -> Pose {
    Pose::new(a.rotation.then(&b.rotation), a.rotation.apply(&b.translation) + a.translation)
}

/// The pose of `b` expressed in the frame of `a`, so that
/// `compose_pose(a, relative_pose(a, b)) == b`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    compose_pose(&a.inverse(), b)
}

pub fn world_to_camera(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.rotation.inverse().apply(&(p - pose.translation))
}

/// Offset on the ground-like plane of a view: `x` to the right, `y` forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarOffset {
    pub x: f64,
    pub y: f64,
}

impl PlanarOffset {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarOffset { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Bearing clockwise from +y (forward), degrees in `[0, 360)`.
    pub fn bearing_cw_deg(&self) -> f64 {
        wrap_deg_360(self.x.atan2(self.y).to_degrees())
    }

    /// Signed bearing counterclockwise from +y, degrees in `(-180, 180]`.
    pub fn bearing_ccw_deg(&self) -> f64 {
        wrap_deg_180((-self.x).atan2(self.y).to_degrees())
    }

    pub fn sub(&self, other: &PlanarOffset) -> PlanarOffset {
        PlanarOffset::new(self.x - other.x, self.y - other.y)
    }
}

/// Target expressed in the anchor camera frame with height dropped:
/// camera x becomes planar x, camera z becomes planar y.
pub fn planar_offset(anchor: &Pose, target: &Vec3) -> PlanarOffset {
    let c = world_to_camera(anchor, target);
    PlanarOffset::new(c.x, c.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Front,
    Back,
    Left,
    Right,
    Above,
    Below,
    Ambiguous,
}

impl Sector {
    pub fn label(&self) -> &'static str {
        match self {
            Sector::Front => "front",
            Sector::Back => "back",
            Sector::Left => "left",
            Sector::Right => "right",
            Sector::Above => "above",
            Sector::Below => "below",
            Sector::Ambiguous => "ambiguous",
        }
    }

    pub const HORIZONTAL: [Sector; 4] = [Sector::Front, Sector::Back, Sector::Left, Sector::Right];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
    Ambiguous,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::FrontLeft, Quadrant::FrontRight, Quadrant::BackLeft, Quadrant::BackRight];

    pub fn label(&self) -> &'static str {
        match self {
            Quadrant::FrontLeft => "front-left",
            Quadrant::FrontRight => "front-right",
            Quadrant::BackLeft => "back-left",
            Quadrant::BackRight => "back-right",
            Quadrant::Ambiguous => "ambiguous",
        }
    }

    pub fn from_label(label: &str) -> Option<Quadrant> {
        Self::ALL.into_iter().find(|q| q.label() == label)
    }

    pub fn opposite(&self) -> Quadrant {
        match self {
            Quadrant::FrontLeft => Quadrant::BackRight,
            Quadrant::FrontRight => Quadrant::BackLeft,
            Quadrant::BackLeft => Quadrant::FrontRight,
            Quadrant::BackRight => Quadrant::FrontLeft,
            Quadrant::Ambiguous => Quadrant::Ambiguous,
        }
    }
}

/// Default ambiguity band half-width for sector and quadrant classification.
pub const DEFAULT_MARGIN_DEG: f64 = 10.0;

fn angular_distance_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg_360(a - b);
    d.min(360.0 - d)
}

fn nondegenerate(offset: &PlanarOffset) -> Result<(), GeometryError> {
    if !(offset.x.is_finite() && offset.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if offset.norm() <= MIN_OFFSET_NORM {
        return Err(GeometryError::DegenerateOffset { x: offset.x, y: offset.y });
    }
    Ok(())
}

/// Four-way sector of a planar offset. Sectors are centred on the axes and
/// bounded at the 45° diagonals; anything within `margin_deg` of a diagonal
/// is [`Sector::Ambiguous`].
pub fn classify_sector(offset: PlanarOffset, margin_deg: f64) -> Result<Sector, GeometryError> {
    nondegenerate(&offset)?;
    let bearing = offset.bearing_cw_deg();
    if [45.0, 135.0, 225.0, 315.0].iter().any(|b| angular_distance_deg(bearing, *b) <= margin_deg) {
        return Ok(Sector::Ambiguous);
    }
    Ok(match bearing {
        b if !(45.0..315.0).contains(&b) => Sector::Front,
        b if b < 135.0 => Sector::Right,
        b if b < 225.0 => Sector::Back,
        _ => Sector::Left,
    })
}

/// Quadrant of a planar offset; within `margin_deg` of either axis the
/// result is [`Quadrant::Ambiguous`].
pub fn classify_quadrant(offset: PlanarOffset, margin_deg: f64) -> Result<Quadrant, GeometryError> {
    nondegenerate(&offset)?;
    let bearing = offset.bearing_cw_deg();
    if [0.0, 90.0, 180.0, 270.0].iter().any(|b| angular_distance_deg(bearing, *b) <= margin_deg) {
        return Ok(Quadrant::Ambiguous);
    }
    Ok(match (offset.x > 0.0, offset.y > 0.0) {
        (true, true) => Quadrant::FrontRight,
        (false, true) => Quadrant::FrontLeft,
        (true, false) => Quadrant::BackRight,
        (false, false) => Quadrant::BackLeft,
    })
}

pub fn wrap_deg_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps to `(-180, 180]`.
pub fn wrap_deg_180(deg: f64) -> f64 {
    let w = wrap_deg_360(deg);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Position and heading on the world ground plane.
///
/// `heading_deg` is counterclockwise from world +y. In the local frame of a
/// planar pose, +y is the heading direction and +x is to its right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, heading_deg: f64) -> Self {
        PlanarPose { x, y, heading_deg }
    }

    pub fn origin() -> Self {
        PlanarPose::new(0.0, 0.0, 0.0)
    }

    /// Ground-plane footprint of a camera pose. The heading follows the
    /// viewing direction; for a camera looking straight up or down, the
    /// image-up direction stands in for it.
    pub fn from_camera(pose: &Pose) -> Self {
        let forward = pose.forward();
        let mut h = (forward.x, forward.y);
        if h.0.hypot(h.1) < 1e-6 {
            let up = -pose.rotation.axis(1);
            let s = -forward.z.signum();
            h = (s * up.x, s * up.y);
        }
        let heading = (-h.0).atan2(h.1).to_degrees();
        PlanarPose::new(pose.translation.x, pose.translation.y, wrap_deg_180(heading))
    }

    /// Frame standing at `from` and facing `toward` on the ground plane.
    pub fn facing(from: (f64, f64), toward: (f64, f64)) -> Self {
        let (dx, dy) = (toward.0 - from.0, toward.1 - from.1);
        PlanarPose::new(from.0, from.1, wrap_deg_180((-dx).atan2(dy).to_degrees()))
    }

    fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let t = self.heading_deg.to_radians();
        let right = (t.cos(), t.sin());
        let forward = (-t.sin(), t.cos());
        (right, forward)
    }

    /// Parent-frame point expressed in this pose's local frame.
    pub fn to_local(&self, px: f64, py: f64) -> PlanarOffset {
        let (right, forward) = self.axes();
        let (dx, dy) = (px - self.x, py - self.y);
        PlanarOffset::new(dx * right.0 + dy * right.1, dx * forward.0 + dy * forward.1)
    }

    /// Local-frame offset expressed in the parent frame.
    pub fn to_parent(&self, local: PlanarOffset) -> (f64, f64) {
        let (right, forward) = self.axes();
        (self.x + local.x * right.0 + local.y * forward.0, self.y + local.x * right.1 + local.y * forward.1)
    }

    /// `self ∘ other`, with `other` given in this pose's local frame.
    pub fn compose(&self, other: &PlanarPose) -> PlanarPose {
        let (x, y) = self.to_parent(PlanarOffset::new(other.x, other.y));
        PlanarPose::new(x, y, wrap_deg_180(self.heading_deg + other.heading_deg))
    }

    /// `other` expressed in this pose's local frame.
    pub fn relative(&self, other: &PlanarPose) -> PlanarPose {
        let local = self.to_local(other.x, other.y);
        PlanarPose::new(local.x, local.y, wrap_deg_180(other.heading_deg - self.heading_deg))
    }
}
