//! Tabletop arm with a fixed third-person RGBD camera.

use super::{look_rotation, ObjectClass, Primitive, Shape, SimConfig, SimError, SkillOutcome};
use crate::decision::Skill;
use crate::geometry::{canonical_yaw, CameraModel, GraspPose, Point3, RigidTransform};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmRig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
}

impl Default for ArmRig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            focal: 150.0,
            eye: [1.25, 0.0, 1.1],
            look_at: [0.5, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPlace {
    Table,
    Box,
    Drawer,
    Gripper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmItem {
    pub id: u32,
    pub class: ObjectClass,
    pub shape: Shape,
    pub center: Point3,
    pub place: ArmPlace,
}

/// Open-top box on the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenBox {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub inner_half: [f64; 2],
    pub wall_height: f64,
}

/// Cabinet with a tray sliding out along +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drawer {
    pub id: u32,
    pub handle_id: u32,
    /// Centre of the cabinet footprint.
    pub x: f64,
    pub y: f64,
    /// 0 = closed, 1 = fully out.
    pub fraction: f64,
}

pub const WALL: f64 = 0.01;

impl OpenBox {
    pub fn contains(&self, p: &Point3) -> bool {
        (p.x - self.x).abs() <= self.inner_half[0]
            && (p.y - self.y).abs() <= self.inner_half[1]
            && p.z >= WALL
            && p.z <= self.wall_height
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        (x - self.x).abs() <= self.inner_half[0] && (y - self.y).abs() <= self.inner_half[1]
    }
}

impl Drawer {
    pub const DEPTH: f64 = 0.2;
    pub const INNER_HALF_WIDTH: f64 = 0.12;
    pub const WALL_HEIGHT: f64 = 0.06;
    pub const CABINET_HEIGHT: f64 = 0.15;

    /// Front face of the cabinet.
    pub fn front(&self) -> f64 {
        self.x + Self::DEPTH / 2.0
    }

    /// Outer x extent of the tray.
    pub fn tray_x(&self) -> (f64, f64) {
        let out = self.fraction * Self::DEPTH;
        (self.front() - Self::DEPTH + out, self.front() + out)
    }

    pub fn handle_center(&self) -> Point3 {
        Point3::new(self.tray_x().1 + 0.015, self.y, 0.035)
    }

    /// Inside the tray volume, whether or not that part is exposed.
    pub fn contains(&self, p: &Point3) -> bool {
        let (x0, x1) = self.tray_x();
        p.x >= x0 + WALL
            && p.x <= x1 - WALL
            && (p.y - self.y).abs() <= Self::INNER_HALF_WIDTH
            && p.z >= WALL
            && p.z <= Self::WALL_HEIGHT
    }

    /// Exposed part of the tray floor, where things can be dropped.
    fn covers(&self, x: f64, y: f64) -> bool {
        let (_, x1) = self.tray_x();
        x >= self.front() && x <= x1 - WALL && (y - self.y).abs() <= Self::INNER_HALF_WIDTH
    }
}

/// End-effector motion under way: linear interpolation over `total` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub from: Point3,
    pub to: Point3,
    pub from_yaw: f64,
    pub to_yaw: f64,
    pub total: u32,
    pub done: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmWorld {
    #[serde(default)]
    pub rig: ArmRig,
    pub ee: Point3,
    pub ee_yaw: f64,
    pub gripper: Gripper,
    #[serde(default)]
    pub held: Option<u32>,
    /// Offset from the end effector to the held item's centre.
    #[serde(default)]
    pub held_offset: [f64; 3],
    #[serde(default)]
    pub motion: Option<Motion>,
    #[serde(default)]
    pub items: Vec<ArmItem>,
    #[serde(default)]
    pub container: Option<OpenBox>,
    #[serde(default)]
    pub drawer: Option<Drawer>,
    /// Item the task is about.
    #[serde(default)]
    pub target: Option<u32>,
}

pub const TABLE_ID: u32 = 0;

/// Smallest angle between two undirected axes.
pub fn axis_difference(a: f64, b: f64) -> f64 {
    let d = (canonical_yaw(a) - canonical_yaw(b)).abs();
    d.min(PI - d)
}

impl ArmWorld {
    pub fn home() -> Point3 {
        Point3::new(0.3, 0.0, 0.4)
    }

    pub fn empty() -> Self {
        Self {
            rig: ArmRig::default(),
            ee: Self::home(),
            ee_yaw: 0.0,
            gripper: Gripper::Open,
            held: None,
            held_offset: [0.0; 3],
            motion: None,
            items: vec![],
            container: None,
            drawer: None,
            target: None,
        }
    }

    pub fn camera(&self) -> CameraModel {
        let r = &self.rig;
        let eye = Vector3::from(r.eye);
        let rot = look_rotation(Vector3::from(r.look_at) - eye);
        CameraModel::new(
            r.focal,
            r.focal,
            (r.width as f64 - 1.0) / 2.0,
            (r.height as f64 - 1.0) / 2.0,
            r.width,
            r.height,
        )
        .expect("rig intrinsics are valid")
        .with_extrinsics(RigidTransform::new(rot, eye))
        .expect("look-at rotation is proper")
    }

    pub fn item(&self, id: u32) -> Option<&ArmItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn primitives(&self) -> Vec<Primitive> {
        let mut out = vec![Primitive {
            id: TABLE_ID,
            owner: TABLE_ID,
            class: ObjectClass::Table,
            center: Point3::new(0.5, 0.0, -0.025),
            shape: Shape::Cuboid { half: [0.6, 0.7, 0.025], yaw: 0.0 },
        }];
        let slab = |id: u32, owner: u32, class, c: [f64; 3], half: [f64; 3]| Primitive {
            id,
            owner,
            class,
            center: Point3::new(c[0], c[1], c[2]),
            shape: Shape::Cuboid { half, yaw: 0.0 },
        };
        if let Some(b) = &self.container {
            let [hx, hy] = b.inner_half;
            let h = b.wall_height;
            let (ox, oy) = (hx + WALL, hy + WALL);
            let base = b.id * 8;
            let cls = ObjectClass::Container;
            out.push(slab(base, b.id, cls, [b.x, b.y, WALL / 2.0], [ox, oy, WALL / 2.0]));
            out.push(slab(base + 1, b.id, cls, [b.x + hx + WALL / 2.0, b.y, h / 2.0], [WALL / 2.0, oy, h / 2.0]));
            out.push(slab(base + 2, b.id, cls, [b.x - hx - WALL / 2.0, b.y, h / 2.0], [WALL / 2.0, oy, h / 2.0]));
            out.push(slab(base + 3, b.id, cls, [b.x, b.y + hy + WALL / 2.0, h / 2.0], [hx, WALL / 2.0, h / 2.0]));
            out.push(slab(base + 4, b.id, cls, [b.x, b.y - hy - WALL / 2.0, h / 2.0], [hx, WALL / 2.0, h / 2.0]));
        }
        if let Some(d) = &self.drawer {
            let cls = ObjectClass::Drawer;
            let wy = Drawer::INNER_HALF_WIDTH + WALL;
            out.push(slab(
                d.id * 8,
                d.id,
                cls,
                [d.x, d.y, Drawer::CABINET_HEIGHT / 2.0],
                [Drawer::DEPTH / 2.0, wy + WALL, Drawer::CABINET_HEIGHT / 2.0],
            ));
            let tray = d.id + 1;
            let (x0, x1) = d.tray_x();
            let xc = (x0 + x1) / 2.0;
            let hw = Drawer::WALL_HEIGHT / 2.0;
            let half_len = Drawer::DEPTH / 2.0;
            out.push(slab(tray * 8, tray, cls, [xc, d.y, WALL / 2.0], [half_len, wy, WALL / 2.0]));
            out.push(slab(tray * 8 + 1, tray, cls, [x1 - WALL / 2.0, d.y, hw], [WALL / 2.0, wy, hw]));
            out.push(slab(tray * 8 + 2, tray, cls, [x0 + WALL / 2.0, d.y, hw], [WALL / 2.0, wy, hw]));
            out.push(slab(tray * 8 + 3, tray, cls, [xc, d.y + wy - WALL / 2.0, hw], [half_len, WALL / 2.0, hw]));
            out.push(slab(tray * 8 + 4, tray, cls, [xc, d.y - wy + WALL / 2.0, hw], [half_len, WALL / 2.0, hw]));
            let hc = d.handle_center();
            out.push(slab(d.handle_id * 8, d.handle_id, ObjectClass::Handle, [hc.x, hc.y, hc.z], [0.015, 0.05, 0.01]));
        }
        for i in &self.items {
            out.push(Primitive {
                id: i.id * 8,
                owner: i.id,
                class: i.class,
                center: i.center,
                shape: i.shape,
            });
        }
        out
    }

    pub fn start_motion(&mut self, pose: &GraspPose, ticks: u32) {
        self.motion = Some(Motion {
            from: self.ee,
            to: pose.position,
            from_yaw: self.ee_yaw,
            to_yaw: pose.yaw,
            total: ticks.max(1),
            done: 0,
        });
    }

    pub fn step(&mut self) {
        let Some(mut m) = self.motion else {
            return;
        };
        m.done += 1;
        let f = m.done as f64 / m.total as f64;
        let lerp = |a: f64, b: f64| a + f * (b - a);
        self.ee = Point3::new(lerp(m.from.x, m.to.x), lerp(m.from.y, m.to.y), lerp(m.from.z, m.to.z));
        self.ee_yaw = lerp(m.from_yaw, m.to_yaw);
        self.motion = (m.done < m.total).then_some(m);
        self.carry();
    }

    fn carry(&mut self) {
        if let Some(id) = self.held {
            let (ee, off) = (self.ee, self.held_offset);
            if let Some(i) = self.items.iter_mut().find(|i| i.id == id) {
                i.center = ee.offset(off[0], off[1], off[2]);
            }
        }
    }

    pub fn apply_skill(&mut self, skill: Skill, config: &SimConfig) -> SkillOutcome {
        match skill {
            Skill::Grasp => self.grasp(config),
            Skill::Release => self.release(),
            Skill::Pull => self.pull(config),
            other => SkillOutcome::Failed(format!("{other} is not an arm skill")),
        }
    }

    fn grasp(&mut self, config: &SimConfig) -> SkillOutcome {
        if self.held.is_some() {
            return SkillOutcome::Failed("already holding an item".into());
        }
        let tol = config.grasp_yaw_tol_deg.to_radians();
        let ee = self.ee;
        let candidate = self
            .items
            .iter()
            .filter(|i| i.place != ArmPlace::Gripper && i.center.distance(&ee) <= config.eps_grasp)
            .min_by(|a, b| a.center.distance(&ee).total_cmp(&b.center.distance(&ee)))
            .copied();
        let Some(item) = candidate else {
            return SkillOutcome::Failed("nothing within grasp tolerance".into());
        };
        if let Shape::Cuboid { half, yaw } = item.shape {
            if (half[0] - half[1]).abs() > 1e-9 {
                // jaws close across the shorter side
                let closing = if half[0] > half[1] { yaw + FRAC_PI_2 } else { yaw };
                if axis_difference(self.ee_yaw, closing) > tol {
                    return SkillOutcome::Failed("gripper not aligned with the item".into());
                }
            }
        }
        self.held = Some(item.id);
        self.gripper = Gripper::Closed;
        self.held_offset = [item.center.x - ee.x, item.center.y - ee.y, item.center.z - ee.z];
        if let Some(i) = self.items.iter_mut().find(|i| i.id == item.id) {
            i.place = ArmPlace::Gripper;
        }
        SkillOutcome::Applied
    }

    fn release(&mut self) -> SkillOutcome {
        self.gripper = Gripper::Open;
        let Some(id) = self.held.take() else {
            return SkillOutcome::Failed("nothing held".into());
        };
        self.held_offset = [0.0; 3];
        let (x, y) = (self.ee.x, self.ee.y);
        let (place, support) = if self.container.is_some_and(|b| b.covers(x, y)) {
            (ArmPlace::Box, WALL)
        } else if self.drawer.is_some_and(|d| d.covers(x, y)) {
            (ArmPlace::Drawer, WALL)
        } else {
            (ArmPlace::Table, 0.0)
        };
        if let Some(i) = self.items.iter_mut().find(|i| i.id == id) {
            i.place = place;
            i.center = Point3::new(x, y, support + i.shape.half_height());
        }
        SkillOutcome::Applied
    }

    fn pull(&mut self, config: &SimConfig) -> SkillOutcome {
        let Some(mut d) = self.drawer else {
            return SkillOutcome::Failed("no drawer".into());
        };
        if self.ee.distance(&d.handle_center()) > config.eps_grasp {
            return SkillOutcome::Failed("not hooked on the handle".into());
        }
        let dx = (1.0 - d.fraction) * Drawer::DEPTH;
        d.fraction = 1.0;
        self.drawer = Some(d);
        for i in self.items.iter_mut().filter(|i| i.place == ArmPlace::Drawer) {
            i.center.x += dx;
        }
        self.ee.x += dx;
        self.carry();
        SkillOutcome::Applied
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.held.is_some() && self.gripper != Gripper::Closed {
            return Err(SimError::Invalid("held item with open gripper".into()));
        }
        if let Some(d) = &self.drawer {
            if !(0.0..=1.0).contains(&d.fraction) {
                return Err(SimError::Invalid("drawer fraction outside [0, 1]".into()));
            }
        }
        for i in &self.items {
            if (i.place == ArmPlace::Gripper) != (self.held == Some(i.id)) {
                return Err(SimError::Invalid(format!("item {} gripper state is inconsistent", i.id)));
            }
        }
        Ok(())
    }
}
