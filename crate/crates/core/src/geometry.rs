//! Camera and control math.
//!
//! Pixel coordinates put pixel centres on integers: pixel `(i, j)` of a
//! raster is sampled by the ray through `(u, v) = (i, j)`. Camera frames are
//! x-right, y-down, z-forward. Robot body frames are x-forward, y-left, z-up.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("no valid depth near pixel ({u:.2}, {v:.2})")]
    DepthUnavailable { u: f64, v: f64 },
}

type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn midpoint(&self, other: &Pixel) -> Pixel {
        Pixel::new((self.u + other.u) / 2.0, (self.v + other.v) / 2.0)
    }

    /// Integer raster index of the nearest pixel centre.
    pub fn nearest(&self) -> (i64, i64) {
        (self.u.round() as i64, self.v.round() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn planar_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    /// Rotation about the world z axis followed by translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        Self::new(*r.matrix(), translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        orth <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

/// Pinhole intrinsics plus the camera-to-world extrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsics: RigidTransform,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics: RigidTransform::identity(),
        }
        .validated()
    }

    pub fn with_extrinsics(mut self, extrinsics: RigidTransform) -> Result<Self> {
        self.extrinsics = extrinsics;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::Domain(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return Err(GeometryError::Domain(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(GeometryError::Domain(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        if !self.extrinsics.is_proper_rotation(1e-9) {
            return Err(GeometryError::Domain(
                "extrinsic rotation is not orthonormal with det +1".into(),
            ));
        }
        Ok(self)
    }

    /// Whether the nearest raster pixel of `p` lies inside the image.
    pub fn contains(&self, p: &Pixel) -> bool {
        p.is_finite()
            && p.u >= -0.5
            && p.v >= -0.5
            && p.u < self.width as f64 - 0.5
            && p.v < self.height as f64 - 0.5
    }

    /// Unit-free ray direction (z = 1) through `p` in the camera frame.
    pub fn ray_direction(&self, p: &Pixel) -> Vector3<f64> {
        Vector3::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0)
    }

    pub fn world_position(&self) -> Point3 {
        Point3::from_vector(self.extrinsics.translation)
    }
}

pub fn unproject(pixel: &Pixel, depth: f64, cam: &CameraModel) -> Result<Point3> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::Domain(format!("depth must be > 0, got {depth}")));
    }
    if !pixel.is_finite() {
        return Err(GeometryError::Domain("pixel is not finite".into()));
    }
    Ok(Point3::new(
        (pixel.u - cam.cx) * depth / cam.fx,
        (pixel.v - cam.cy) * depth / cam.fy,
        depth,
    ))
}

pub fn project(point: &Point3, cam: &CameraModel) -> Result<Pixel> {
    if point.z.is_nan() || point.z <= 0.0 {
        return Err(GeometryError::BehindCamera(point.z));
    }
    Ok(Pixel::new(
        cam.fx * point.x / point.z + cam.cx,
        cam.fy * point.y / point.z + cam.cy,
    ))
}

pub fn camera_to_world(point: &Point3, cam: &CameraModel) -> Point3 {
    cam.extrinsics.apply(point)
}

pub fn world_to_camera(point: &Point3, cam: &CameraModel) -> Point3 {
    cam.extrinsics.inverse().apply(point)
}

/// Projects a world point straight to a pixel through `cam`.
pub fn project_world(point: &Point3, cam: &CameraModel) -> Result<Pixel> {
    project(&world_to_camera(point, cam), cam)
}

/// Dense metric depth raster; `0.0` marks a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn filled(width: u32, height: u32, depth: f64) -> Self {
        Self {
            width,
            height,
            data: vec![depth; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        Some(self.data[y as usize * self.width as usize + x as usize])
    }

    pub fn set(&mut self, x: u32, y: u32, depth: f64) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = depth;
    }

    fn valid_at(&self, x: i64, y: i64) -> Option<f64> {
        self.get(x, y).filter(|d| d.is_finite() && *d > 0.0)
    }

    /// Nearest-pixel depth at `p`, falling back to the closest valid pixel
    /// within `radius` (Euclidean, ties broken in row-major order).
    pub fn sample(&self, p: &Pixel, radius: u32) -> Result<f64> {
        let unavailable = GeometryError::DepthUnavailable { u: p.u, v: p.v };
        if !p.is_finite() {
            return Err(unavailable);
        }
        let (x0, y0) = p.nearest();
        if let Some(d) = self.valid_at(x0, y0) {
            return Ok(d);
        }
        let r = radius as i64;
        let mut best: Option<(i64, f64)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = dx * dx + dy * dy;
                if d2 == 0 || d2 > r * r {
                    continue;
                }
                if let Some(d) = self.valid_at(x0 + dx, y0 + dy) {
                    if best.is_none_or(|(b, _)| d2 < b) {
                        best = Some((d2, d));
                    }
                }
            }
        }
        best.map(|(_, d)| d).ok_or(unavailable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub vyaw: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand {
        vx: 0.0,
        vy: 0.0,
        vyaw: 0.0,
    };

    pub fn new(vx: f64, vy: f64, vyaw: f64) -> Self {
        Self { vx, vy, vyaw }
    }
}

/// Gains and clamps for [`velocity_command`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlLimits {
    /// Proportional gain, 1/s.
    pub gain: f64,
    pub v_max: f64,
    pub yaw_max: f64,
    /// Forward speeds at or below this are treated as "no forward motion".
    pub eps_v: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self {
            gain: 0.5,
            v_max: 1.0,
            yaw_max: 1.0,
            eps_v: 1e-6,
        }
    }
}

/// Body-frame velocity toward `target` with `tan(vyaw) = vy / vx`.
///
/// When the clamped forward component is not meaningfully positive the
/// robot turns in place toward the target at `yaw_max`. When the heading
/// exceeds `yaw_max`, `vy` is shrunk so the constraint still holds at
/// `vyaw = ±yaw_max`.
pub fn velocity_command(target: &Point3, limits: &ControlLimits) -> Result<VelocityCommand> {
    if !target.is_finite() {
        return Err(GeometryError::Domain("target is not finite".into()));
    }
    let clamp = |v: f64| v.clamp(-limits.v_max, limits.v_max);
    let vx = clamp(limits.gain * target.x);
    let vy = clamp(limits.gain * target.y);

    if vx <= limits.eps_v {
        if vy.abs() > limits.eps_v {
            return Ok(VelocityCommand::new(0.0, 0.0, vy.signum() * limits.yaw_max));
        }
        if vx < -limits.eps_v {
            // directly behind: turn left to bring it round
            return Ok(VelocityCommand::new(0.0, 0.0, limits.yaw_max));
        }
        return Ok(VelocityCommand::ZERO);
    }

    let heading = vy.atan2(vx);
    if heading.abs() <= limits.yaw_max {
        return Ok(VelocityCommand::new(vx, vy, heading));
    }
    let vyaw = heading.signum() * limits.yaw_max;
    Ok(VelocityCommand::new(vx, vx * vyaw.tan(), vyaw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripMode {
    Grasp,
    /// Gripper stays open (drawer handles).
    Hook,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub position: Point3,
    /// Closing direction about world z, in `[0, π)`.
    pub yaw: f64,
    pub mode: GripMode,
}

/// Folds an angle into `[0, π)`.
pub fn canonical_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(PI);
    if y >= PI {
        0.0
    } else {
        // normalises -0.0
        y + 0.0
    }
}

/// Intersects the camera ray through `p` with the horizontal world plane
/// `z = height`.
fn lift_to_plane(p: &Pixel, height: f64, cam: &CameraModel) -> Option<Point3> {
    let dir = cam.extrinsics.apply_vector(&cam.ray_direction(p));
    let origin = cam.extrinsics.translation;
    if dir.z.abs() < 1e-12 {
        return None;
    }
    let t = (height - origin.z) / dir.z;
    (t > 0.0).then(|| Point3::from_vector(origin + dir * t))
}

/// Top-down grasp pose from two antipodal contact pixels.
///
/// Translation comes from the depth at the midpoint `p*`. The endpoints are
/// lifted onto the horizontal plane through that point and the XY direction
/// between them gives the closing yaw, folded into `[0, π)`.
pub fn grasp_from_antipodal(
    p1: &Pixel,
    p2: &Pixel,
    depth: &DepthImage,
    cam: &CameraModel,
    mode: GripMode,
    hole_radius: u32,
) -> Result<GraspPose> {
    if !p1.is_finite() || !p2.is_finite() {
        return Err(GeometryError::Domain("grasp pixels must be finite".into()));
    }
    if p1 == p2 {
        return Err(GeometryError::Domain("grasp pixels coincide".into()));
    }
    let mid = p1.midpoint(p2);
    if !cam.contains(&mid) {
        return Err(GeometryError::Domain(format!(
            "grasp midpoint ({:.1}, {:.1}) outside the image",
            mid.u, mid.v
        )));
    }
    let d = depth.sample(&mid, hole_radius)?;
    let centre = camera_to_world(&unproject(&mid, d, cam)?, cam);

    let (a, b) = match (
        lift_to_plane(p1, centre.z, cam),
        lift_to_plane(p2, centre.z, cam),
    ) {
        (Some(a), Some(b)) => (a, b),
        // ray parallel to the table: fall back to equal camera depth
        _ => (
            camera_to_world(&unproject(p1, d, cam)?, cam),
            camera_to_world(&unproject(p2, d, cam)?, cam),
        ),
    };
    let (mut dx, mut dy) = (b.x - a.x, b.y - a.y);
    if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
        dx = -dx;
        dy = -dy;
    }
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::Domain(
            "grasp pixels lift to the same world point".into(),
        ));
    }
    Ok(GraspPose {
        position: Point3::new(centre.x, centre.y, centre.z.max(0.0)),
        yaw: canonical_yaw(dy.atan2(dx)),
        mode,
    })
}
