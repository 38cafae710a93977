//! Deterministic kinematic worlds for the legged robot and the tabletop arm.
//!
//! Scene files are the JSON serialisation of [`Scene`]: an object tagged
//! with `"platform": "legged" | "arm"` whose remaining fields are those of
//! [`LeggedWorld`] or [`ArmWorld`]. Lengths are metres, angles radians.

pub mod arm;
pub mod legged;
pub mod render;
pub mod scenes;

pub use arm::{ArmItem, ArmPlace, ArmRig, ArmWorld, Drawer, Gripper, OpenBox};
pub use legged::{Bin, Human, LeggedObject, LeggedRig, LeggedWorld, Mover, Obstacle, Place, Pose2};
pub use render::{occluded, raycast, render, Observation, RenderOptions};
pub use scenes::scene_generator;

use crate::decision::{Platform, Skill};
use crate::geometry::{CameraModel, GraspPose, Point3, VelocityCommand};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene file: {0}")]
    Scene(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Floor,
    Table,
    Wall,
    Ball,
    Bottle,
    Human,
    Bin,
    Toy,
    Container,
    Drawer,
    Handle,
    Banana,
    Pepper,
    Carrot,
    Kiwifruit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Box with half extents along its local axes, rotated by `yaw` about z.
    Cuboid { half: [f64; 3], yaw: f64 },
}

impl Shape {
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Cuboid { half, .. } => half[2],
        }
    }

    pub fn yaw(&self) -> f64 {
        match *self {
            Shape::Sphere { .. } => 0.0,
            Shape::Cuboid { yaw, .. } => yaw,
        }
    }
}

/// One renderable solid. `owner` groups the primitives of one entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: u32,
    pub owner: u32,
    pub class: ObjectClass,
    pub center: Point3,
    pub shape: Shape,
}

impl Primitive {
    pub fn to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.shape.yaw().sin_cos();
        let (dx, dy) = (p.x - self.center.x, p.y - self.center.y);
        Point3::new(c * dx + s * dy, -s * dx + c * dy, p.z - self.center.z)
    }

    pub fn to_world(&self, local: &Point3) -> Point3 {
        let (s, c) = self.shape.yaw().sin_cos();
        Point3::new(
            self.center.x + c * local.x - s * local.y,
            self.center.y + s * local.x + c * local.y,
            self.center.z + local.z,
        )
    }
}

/// Distance from `(x, y)` to the ground footprint of an oriented box.
pub fn footprint_distance(x: f64, y: f64, cx: f64, cy: f64, half: [f64; 2], yaw: f64) -> f64 {
    let (s, c) = yaw.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    let lx = (c * dx + s * dy).abs() - half[0];
    let ly = (-s * dx + c * dy).abs() - half[1];
    let outside = (lx.max(0.0).powi(2) + ly.max(0.0).powi(2)).sqrt();
    outside + lx.max(ly).min(0.0)
}

/// Rotation whose columns are the camera x (right), y (down) and z
/// (forward) axes for a camera looking along `forward` with world z up.
pub fn look_rotation(forward: Vector3<f64>) -> Matrix3<f64> {
    let z = forward.normalize();
    let x = z.cross(&Vector3::z()).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// What the adapter asks the world to do on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Velocity(VelocityCommand),
    /// Start an end-effector motion to this pose.
    MoveEe(GraspPose),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum SkillOutcome {
    Applied,
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub edge_holes: bool,
    /// Dump reaches a bin whose footprint is this close in front.
    pub r_dump: f64,
    pub eps_grasp: f64,
    pub grasp_yaw_tol_deg: f64,
    pub arm_motion_ticks: u32,
    pub jump_distance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 15.0,
            edge_holes: true,
            r_dump: 0.5,
            eps_grasp: 0.03,
            grasp_yaw_tol_deg: 25.0,
            arm_motion_ticks: 15,
            jump_distance: 0.5,
        }
    }
}

impl SimConfig {
    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            edge_holes: self.edge_holes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "platform", rename_all = "snake_case")]
pub enum Scene {
    Legged(LeggedWorld),
    Arm(ArmWorld),
}

impl Scene {
    pub fn platform(&self) -> Platform {
        match self {
            Scene::Legged(_) => Platform::Legged,
            Scene::Arm(_) => Platform::Arm,
        }
    }

    pub fn primitives(&self) -> Vec<Primitive> {
        match self {
            Scene::Legged(w) => w.primitives(),
            Scene::Arm(w) => w.primitives(),
        }
    }

    pub fn camera(&self) -> CameraModel {
        match self {
            Scene::Legged(w) => w.camera(),
            Scene::Arm(w) => w.camera(),
        }
    }

    pub fn render(&self, frame_id: u64, config: &SimConfig) -> Observation {
        render(
            Arc::new(self.primitives()),
            &self.camera(),
            frame_id,
            config.render_options(),
        )
    }

    pub fn step(&mut self, cmd: Option<&Command>, config: &SimConfig) {
        match self {
            Scene::Legged(w) => {
                let v = match cmd {
                    Some(Command::Velocity(v)) => *v,
                    _ => VelocityCommand::ZERO,
                };
                w.step(&v, config.dt);
            }
            Scene::Arm(w) => {
                if let Some(Command::MoveEe(pose)) = cmd {
                    w.start_motion(pose, config.arm_motion_ticks);
                }
                w.step();
            }
        }
    }

    pub fn apply_skill(&mut self, skill: Skill, config: &SimConfig) -> SkillOutcome {
        match self {
            Scene::Legged(w) => w.apply_skill(skill, config),
            Scene::Arm(w) => w.apply_skill(skill, config),
        }
    }

    pub fn collided(&self) -> bool {
        match self {
            Scene::Legged(w) => w.collided,
            Scene::Arm(_) => false,
        }
    }

    /// Legged: x, y, yaw. Arm: end-effector position.
    pub fn pose(&self) -> [f64; 3] {
        match self {
            Scene::Legged(w) => [w.robot.x, w.robot.y, w.robot.yaw],
            Scene::Arm(w) => [w.ee.x, w.ee.y, w.ee.z],
        }
    }

    /// Legged: robot footprint to target footprint. Arm: end effector to
    /// target item centre.
    pub fn target_distance(&self) -> Option<f64> {
        match self {
            Scene::Legged(w) => w.target_distance(),
            Scene::Arm(w) => w.item(w.target?).map(|i| i.center.distance(&w.ee)),
        }
    }

    /// Whether an end-effector motion is still under way.
    pub fn in_motion(&self) -> bool {
        match self {
            Scene::Legged(_) => false,
            Scene::Arm(w) => w.motion.is_some(),
        }
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON state.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scene serialises");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Scene, SimError> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.check()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialises")
    }

    pub fn check(&self) -> Result<(), SimError> {
        match self {
            Scene::Legged(w) => w.check(),
            Scene::Arm(w) => w.check(),
        }
    }
}
