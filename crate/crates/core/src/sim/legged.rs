//! Planar legged robot with an ego RGBD camera.

use super::{footprint_distance, look_rotation, ObjectClass, Primitive, Shape, SimConfig, SimError, SkillOutcome};
use crate::decision::{Platform, Skill};
use crate::geometry::{CameraModel, Point3, RigidTransform, VelocityCommand};
use crate::task::Gesture;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Camera intrinsics, head mount and body size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeggedRig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Camera position in the body frame.
    pub mount: [f64; 3],
    /// Downward pitch of the optical axis.
    pub pitch: f64,
    pub robot_radius: f64,
}

impl Default for LeggedRig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            focal: 75.0,
            mount: [0.05, 0.0, 0.30],
            pitch: 30f64.to_radians(),
            robot_radius: 0.18,
        }
    }
}

impl LeggedRig {
    /// Camera-to-body transform.
    pub fn body_from_camera(&self) -> RigidTransform {
        let (s, c) = self.pitch.sin_cos();
        RigidTransform::new(
            look_rotation(Vector3::new(c, 0.0, -s)),
            Vector3::new(self.mount[0], self.mount[1], self.mount[2]),
        )
    }

    pub fn intrinsics(&self) -> CameraModel {
        CameraModel::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
        .expect("rig intrinsics are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", content = "id", rename_all = "snake_case")]
pub enum Place {
    Ground,
    Basket,
    Bin(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeggedObject {
    pub id: u32,
    pub class: ObjectClass,
    pub shape: Shape,
    pub center: Point3,
    pub place: Place,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub center: Point3,
    pub half: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Human {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Facing direction.
    pub yaw: f64,
    pub height: f64,
    pub gesture: Gesture,
}

impl Human {
    pub const HALF_DEPTH: f64 = 0.15;
    pub const HALF_WIDTH: f64 = 0.22;

    pub fn half(&self) -> [f64; 3] {
        [Self::HALF_DEPTH, Self::HALF_WIDTH, self.height / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub half: [f64; 3],
    pub contents: Vec<u32>,
}

/// Scripted constant-speed motion of one object around a closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub object: u32,
    pub path: Vec<[f64; 2]>,
    pub speed: f64,
    /// Distance travelled along the loop.
    pub travelled: f64,
}

impl Mover {
    pub fn position(&self) -> [f64; 2] {
        let n = self.path.len();
        let seg = |i: usize| {
            let a = self.path[i];
            let b = self.path[(i + 1) % n];
            (a, b, ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        };
        let total: f64 = (0..n).map(|i| seg(i).2).sum();
        if total <= 0.0 {
            return self.path[0];
        }
        let mut s = self.travelled.rem_euclid(total);
        for i in 0..n {
            let (a, b, len) = seg(i);
            if s <= len {
                let f = if len > 0.0 { s / len } else { 0.0 };
                return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            }
            s -= len;
        }
        self.path[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeggedWorld {
    #[serde(default)]
    pub rig: LeggedRig,
    pub robot: Pose2,
    /// Last posture skill performed.
    #[serde(default)]
    pub posture: Option<Skill>,
    #[serde(default)]
    pub basket_load: Vec<u32>,
    #[serde(default)]
    pub objects: Vec<LeggedObject>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub humans: Vec<Human>,
    #[serde(default)]
    pub bins: Vec<Bin>,
    #[serde(default)]
    pub mover: Option<Mover>,
    /// Robot centre must stay inside `[-arena, arena]²`.
    pub arena: f64,
    #[serde(default = "yes")]
    pub floor: bool,
    /// Entity the task is about.
    #[serde(default)]
    pub target: Option<u32>,
    #[serde(default)]
    pub collided: bool,
}

fn yes() -> bool {
    true
}

pub const FLOOR_ID: u32 = 0;

const POSTURES: [Skill; 10] = [
    Skill::Touch,
    Skill::Shake,
    Skill::Scrape,
    Skill::Squat,
    Skill::Heart,
    Skill::Sit,
    Skill::Wallow,
    Skill::LieDown,
    Skill::StandUp,
    Skill::Stretch,
];

impl LeggedWorld {
    pub fn empty(robot: Pose2, arena: f64) -> Self {
        Self {
            rig: LeggedRig::default(),
            robot,
            posture: None,
            basket_load: vec![],
            objects: vec![],
            obstacles: vec![],
            humans: vec![],
            bins: vec![],
            mover: None,
            arena,
            floor: true,
            target: None,
            collided: false,
        }
    }

    pub fn body_pose(&self) -> RigidTransform {
        RigidTransform::from_yaw(self.robot.yaw, Vector3::new(self.robot.x, self.robot.y, 0.0))
    }

    pub fn camera(&self) -> CameraModel {
        let mut cam = self.rig.intrinsics();
        cam.extrinsics = self.body_pose().compose(&self.rig.body_from_camera());
        cam
    }

    pub fn primitives(&self) -> Vec<Primitive> {
        let mut out = Vec::new();
        if self.floor {
            out.push(Primitive {
                id: FLOOR_ID,
                owner: FLOOR_ID,
                class: ObjectClass::Floor,
                center: Point3::new(0.0, 0.0, -0.05),
                shape: Shape::Cuboid {
                    half: [self.arena + 20.0, self.arena + 20.0, 0.05],
                    yaw: 0.0,
                },
            });
        }
        for o in &self.obstacles {
            out.push(Primitive {
                id: o.id * 8,
                owner: o.id,
                class: ObjectClass::Wall,
                center: o.center,
                shape: Shape::Cuboid { half: o.half, yaw: o.yaw },
            });
        }
        for h in &self.humans {
            out.push(Primitive {
                id: h.id * 8,
                owner: h.id,
                class: ObjectClass::Human,
                center: Point3::new(h.x, h.y, h.height / 2.0),
                shape: Shape::Cuboid { half: h.half(), yaw: h.yaw },
            });
        }
        for b in &self.bins {
            out.push(Primitive {
                id: b.id * 8,
                owner: b.id,
                class: ObjectClass::Bin,
                center: Point3::new(b.x, b.y, b.half[2]),
                shape: Shape::Cuboid { half: b.half, yaw: b.yaw },
            });
        }
        for o in self.objects.iter().filter(|o| o.place == Place::Ground) {
            out.push(Primitive {
                id: o.id * 8,
                owner: o.id,
                class: o.class,
                center: o.center,
                shape: o.shape,
            });
        }
        out
    }

    /// Ground position and footprint of an entity, for distance checks.
    pub fn entity_distance(&self, id: u32, x: f64, y: f64) -> Option<f64> {
        if let Some(h) = self.humans.iter().find(|h| h.id == id) {
            let half = h.half();
            return Some(footprint_distance(x, y, h.x, h.y, [half[0], half[1]], h.yaw));
        }
        if let Some(b) = self.bins.iter().find(|b| b.id == id) {
            return Some(footprint_distance(x, y, b.x, b.y, [b.half[0], b.half[1]], b.yaw));
        }
        if let Some(o) = self.obstacles.iter().find(|o| o.id == id) {
            return Some(footprint_distance(x, y, o.center.x, o.center.y, [o.half[0], o.half[1]], o.yaw));
        }
        let o = self.objects.iter().find(|o| o.id == id)?;
        Some(match o.shape {
            Shape::Sphere { radius } => {
                (((x - o.center.x).powi(2) + (y - o.center.y).powi(2)).sqrt() - radius).max(-radius)
            }
            Shape::Cuboid { half, yaw } => footprint_distance(x, y, o.center.x, o.center.y, [half[0], half[1]], yaw),
        })
    }

    /// Robot-centre distance to the task target's footprint.
    pub fn target_distance(&self) -> Option<f64> {
        self.entity_distance(self.target?, self.robot.x, self.robot.y)
    }

    /// Whether a robot disc at `(x, y)` overlaps a solid or leaves the arena.
    pub fn disc_collides(&self, x: f64, y: f64, radius: f64, ignore: Option<u32>) -> bool {
        if x.abs() > self.arena || y.abs() > self.arena {
            return true;
        }
        let hit = |id: u32, d: f64| Some(id) != ignore && d < radius;
        self.obstacles.iter().any(|o| {
            hit(o.id, footprint_distance(x, y, o.center.x, o.center.y, [o.half[0], o.half[1]], o.yaw))
        }) || self.humans.iter().any(|h| {
            let half = h.half();
            hit(h.id, footprint_distance(x, y, h.x, h.y, [half[0], half[1]], h.yaw))
        }) || self.bins.iter().any(|b| {
            hit(b.id, footprint_distance(x, y, b.x, b.y, [b.half[0], b.half[1]], b.yaw))
        })
    }

    /// Integrates one tick. Position uses the mid-step heading, which makes
    /// a step exactly undone by the negated command.
    pub fn step(&mut self, cmd: &VelocityCommand, dt: f64) {
        let mid = self.robot.yaw + 0.5 * cmd.vyaw * dt;
        let (s, c) = mid.sin_cos();
        self.robot.x += (cmd.vx * c - cmd.vy * s) * dt;
        self.robot.y += (cmd.vx * s + cmd.vy * c) * dt;
        self.robot.yaw += cmd.vyaw * dt;
        if self.disc_collides(self.robot.x, self.robot.y, self.rig.robot_radius, None) {
            self.collided = true;
        }
        if let Some(m) = self.mover.as_mut() {
            m.travelled += m.speed * dt;
            let [x, y] = m.position();
            let id = m.object;
            if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                o.center.x = x;
                o.center.y = y;
            }
        }
    }

    pub fn apply_skill(&mut self, skill: Skill, config: &SimConfig) -> SkillOutcome {
        if skill.platform() != Platform::Legged {
            return SkillOutcome::Failed(format!("{skill} is not a legged skill"));
        }
        match skill {
            Skill::Walk => SkillOutcome::Applied,
            Skill::TurnLeft => {
                self.robot.yaw += FRAC_PI_2;
                SkillOutcome::Applied
            }
            Skill::TurnRight => {
                self.robot.yaw -= FRAC_PI_2;
                SkillOutcome::Applied
            }
            Skill::Jump => {
                let (s, c) = self.robot.yaw.sin_cos();
                self.robot.x += config.jump_distance * c;
                self.robot.y += config.jump_distance * s;
                if self.disc_collides(self.robot.x, self.robot.y, self.rig.robot_radius, None) {
                    self.collided = true;
                }
                SkillOutcome::Applied
            }
            Skill::Dump => self.dump(config.r_dump),
            s if POSTURES.contains(&s) => {
                self.posture = Some(s);
                SkillOutcome::Applied
            }
            _ => SkillOutcome::Failed(format!("{skill} has no effect here")),
        }
    }

    fn dump(&mut self, r_dump: f64) -> SkillOutcome {
        if self.basket_load.is_empty() {
            return SkillOutcome::Failed("basket is empty".into());
        }
        let (s, c) = self.robot.yaw.sin_cos();
        let (rx, ry) = (self.robot.x, self.robot.y);
        let bin = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, b)| {
                let d = footprint_distance(rx, ry, b.x, b.y, [b.half[0], b.half[1]], b.yaw);
                // bin centre must lie ahead of the robot
                let ahead = (b.x - rx) * c + (b.y - ry) * s;
                d <= r_dump && ahead > 0.0
            })
            .min_by(|a, b| {
                let da = (a.1.x - rx).hypot(a.1.y - ry);
                let db = (b.1.x - rx).hypot(b.1.y - ry);
                da.total_cmp(&db)
            })
            .map(|(i, _)| i);
        let load = std::mem::take(&mut self.basket_load);
        match bin {
            Some(i) => {
                let bid = self.bins[i].id;
                let (bx, by, top) = (self.bins[i].x, self.bins[i].y, self.bins[i].half[2]);
                for id in load {
                    if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                        o.place = Place::Bin(bid);
                        o.center = Point3::new(bx, by, top);
                    }
                    self.bins[i].contents.push(id);
                }
                SkillOutcome::Applied
            }
            None => {
                for id in load {
                    if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                        o.place = Place::Ground;
                        let h = o.shape.half_height();
                        o.center = Point3::new(rx + 0.3 * c, ry + 0.3 * s, h);
                    }
                }
                SkillOutcome::Failed("no bin within reach, load spilled".into())
            }
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.arena.is_nan() || self.arena <= 0.0 {
            return Err(SimError::Invalid("arena must be positive".into()));
        }
        if self.disc_collides(self.robot.x, self.robot.y, self.rig.robot_radius, None) {
            return Err(SimError::Invalid("robot starts in collision or outside the arena".into()));
        }
        let mut ids: Vec<u32> = self
            .objects
            .iter()
            .map(|o| o.id)
            .chain(self.obstacles.iter().map(|o| o.id))
            .chain(self.humans.iter().map(|h| h.id))
            .chain(self.bins.iter().map(|b| b.id))
            .collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n || ids.contains(&FLOOR_ID) {
            return Err(SimError::Invalid("entity ids must be unique and nonzero".into()));
        }
        for o in &self.objects {
            let in_basket = self.basket_load.contains(&o.id);
            if in_basket != (o.place == Place::Basket) {
                return Err(SimError::Invalid(format!("object {} basket state is inconsistent", o.id)));
            }
        }
        Ok(())
    }
}
