use super::{Brain, BrainError, BrainQuery, BrainReply};
use crate::decision::{serialize_decision, Decision, Platform, Skill, SkillId};
use crate::geometry::{canonical_yaw, project_world, CameraModel, Pixel, Point3};
use crate::sim::arm::{ArmPlace, ArmWorld, WALL};
use crate::sim::legged::{LeggedWorld, Obstacle};
use crate::sim::{footprint_distance, occluded, ObjectClass, Primitive, Scene, Shape};
use crate::task::{Gesture, TaskId};
use std::f64::consts::{FRAC_PI_2, PI};

/// Scripted privileged brain: reads the true world and answers with the
/// decision a competent planner would give.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBrain;

const PATH_MARGIN: f64 = 0.08;
const DETOUR_MARGIN: f64 = 0.35;
/// Where items taken out of a container are put down.
const TABLE_SPOT: [f64; 2] = [0.82, -0.02];

impl Brain for OracleBrain {
    fn decide(&mut self, query: &BrainQuery, world: &Scene) -> Result<BrainReply, BrainError> {
        let d = OracleBrain::decision(query.task, world);
        Ok(BrainReply::immediate(serialize_decision(&d).expect("oracle decisions are valid")))
    }
}

fn skill(platform: Platform, s: Skill) -> SkillId {
    SkillId { platform, skill: s }
}

struct View<'a> {
    cam: CameraModel,
    prims: &'a [Primitive],
}

impl View<'_> {
    /// Pixel of `p` if it is in frame and not hidden by anything but `owner`.
    fn see(&self, p: &Point3, owner: u32) -> Option<Pixel> {
        let px = project_world(p, &self.cam).ok()?;
        if !self.cam.contains(&px) {
            return None;
        }
        // keep clear of the border so small noise stays in frame
        let m = 2.0;
        if px.u < m || px.v < m || px.u > self.cam.width as f64 - 1.0 - m || px.v > self.cam.height as f64 - 1.0 - m {
            return None;
        }
        (!occluded(self.prims, &self.cam.world_position(), p, Some(owner), 0.01)).then_some(px)
    }
}

impl OracleBrain {
    pub fn decision(task: TaskId, world: &Scene) -> Decision {
        match world {
            Scene::Legged(w) => legged(task, w),
            Scene::Arm(w) => arm(task, w),
        }
    }
}

fn target_name(w: &LeggedWorld, id: u32) -> &'static str {
    if w.humans.iter().any(|h| h.id == id) {
        "person"
    } else if w.bins.iter().any(|b| b.id == id) {
        "bin"
    } else {
        match w.objects.iter().find(|o| o.id == id).map(|o| o.class) {
            Some(ObjectClass::Ball) => "ball",
            Some(ObjectClass::Bottle) => "bottle",
            _ => "target",
        }
    }
}

/// Candidate surface-facing points on the target, lowest first.
fn target_points(w: &LeggedWorld, id: u32) -> Vec<Point3> {
    if let Some(h) = w.humans.iter().find(|h| h.id == id) {
        return [0.3, 0.5, 0.7, 0.9, 1.2].iter().map(|z| Point3::new(h.x, h.y, *z)).collect();
    }
    if let Some(b) = w.bins.iter().find(|b| b.id == id) {
        return [0.15, 0.25, 0.35].iter().map(|z| Point3::new(b.x, b.y, *z)).collect();
    }
    match w.objects.iter().find(|o| o.id == id) {
        Some(o) => match o.shape {
            Shape::Sphere { .. } => vec![o.center],
            Shape::Cuboid { half, .. } => [0.1, 0.2, 0.3, 0.4, 0.5, 0.7]
                .iter()
                .filter(|z| **z < 2.0 * half[2] - 0.05)
                .map(|z| Point3::new(o.center.x, o.center.y, *z))
                .collect(),
        },
        None => vec![],
    }
}

fn target_xy(w: &LeggedWorld, id: u32) -> Option<(f64, f64)> {
    target_points(w, id).first().map(|p| (p.x, p.y))
}

/// First obstacle a robot disc of `radius` would touch moving in a straight
/// line between the two points.
fn blocking_obstacle(w: &LeggedWorld, from: (f64, f64), to: (f64, f64), radius: f64) -> Option<&Obstacle> {
    let len = (to.0 - from.0).hypot(to.1 - from.1);
    let n = (len / 0.05).ceil().max(1.0) as usize;
    for i in 0..=n {
        let f = i as f64 / n as f64;
        let (x, y) = (from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1));
        if let Some(o) = w.obstacles.iter().find(|o| {
            footprint_distance(x, y, o.center.x, o.center.y, [o.half[0], o.half[1]], o.yaw) < radius
        }) {
            return Some(o);
        }
    }
    None
}

fn path_clear(w: &LeggedWorld, from: (f64, f64), to: (f64, f64), radius: f64, ignore: Option<u32>) -> bool {
    let len = (to.0 - from.0).hypot(to.1 - from.1);
    let n = (len / 0.05).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let f = i as f64 / n as f64;
        !w.disc_collides(from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1), radius, ignore)
    })
}

/// Floor waypoint beside and just past `ob`, on the side with more room.
/// Its lateral offset from the robot-target line clears the obstacle's
/// extent by the robot radius plus a margin.
pub fn detour_waypoint(w: &LeggedWorld, ob: &Obstacle, goal: (f64, f64)) -> Option<Point3> {
    let r = (w.robot.x, w.robot.y);
    let len = (goal.0 - r.0).hypot(goal.1 - r.1);
    if len < 1e-9 {
        return None;
    }
    let u = ((goal.0 - r.0) / len, (goal.1 - r.1) / len);
    let n = (-u.1, u.0);
    let (s, c) = ob.yaw.sin_cos();
    let corners: Vec<(f64, f64)> = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .map(|(a, b)| {
            let (lx, ly) = (a * ob.half[0], b * ob.half[1]);
            (ob.center.x + c * lx - s * ly - r.0, ob.center.y + s * lx + c * ly - r.1)
        })
        .collect();
    let far = corners.iter().map(|p| p.0 * u.0 + p.1 * u.1).fold(f64::MIN, f64::max);
    let radius = w.rig.robot_radius;
    let mut best: Option<(f64, f64, Point3)> = None;
    for side in [1.0, -1.0] {
        let extent = corners.iter().map(|p| side * (p.0 * n.0 + p.1 * n.1)).fold(f64::MIN, f64::max);
        let lateral = extent.max(0.0) + radius + DETOUR_MARGIN;
        let along = far + 0.1;
        let d = (r.0 + along * u.0 + side * lateral * n.0, r.1 + along * u.1 + side * lateral * n.1);
        if !path_clear(w, r, d, radius + PATH_MARGIN, w.target) {
            continue;
        }
        let room = clearance(w, d);
        let better = match best {
            None => true,
            Some((b_room, b_lat, _)) => room > b_room + 1e-9 || ((room - b_room).abs() <= 1e-9 && lateral < b_lat),
        };
        if better {
            best = Some((room, lateral, Point3::new(d.0, d.1, 0.0)));
        }
    }
    best.map(|(_, _, p)| p)
}

fn clearance(w: &LeggedWorld, p: (f64, f64)) -> f64 {
    let walls = w
        .obstacles
        .iter()
        .map(|o| footprint_distance(p.0, p.1, o.center.x, o.center.y, [o.half[0], o.half[1]], o.yaw));
    let arena = [w.arena - p.0.abs(), w.arena - p.1.abs()];
    walls.chain(arena).fold(f64::MAX, f64::min)
}

fn bearing_to(w: &LeggedWorld, p: (f64, f64)) -> f64 {
    let b = (p.1 - w.robot.y).atan2(p.0 - w.robot.x) - w.robot.yaw;
    (b + PI).rem_euclid(2.0 * PI) - PI
}

fn turn_toward(w: &LeggedWorld, p: (f64, f64), what: &str) -> Decision {
    let s = if bearing_to(w, p) >= 0.0 { Skill::TurnLeft } else { Skill::TurnRight };
    Decision::new(skill(Platform::Legged, s), vec![]).with_thoughts(
        format!("The {what} is not in view."),
        format!("Turn {} to look for the {what}.", if s == Skill::TurnLeft { "left" } else { "right" }),
    )
}

fn legged(task: TaskId, w: &LeggedWorld) -> Decision {
    let prims = w.primitives();
    let view = View {
        cam: w.camera(),
        prims: &prims,
    };
    let walk = |kps: Vec<Pixel>, s: Skill, obs: String, plan: String| {
        Decision::new(skill(Platform::Legged, s), kps).with_thoughts(obs, plan)
    };
    let Some(tid) = w.target else {
        return walk(vec![], Skill::StandUp, "Nothing to do.".into(), "Stand by.".into());
    };
    let what = target_name(w, tid);
    let after = match task {
        TaskId::Interaction | TaskId::ComplexInteraction => w
            .humans
            .iter()
            .find(|h| h.id == tid)
            .map_or(Skill::Walk, |h| h.gesture.response()),
        TaskId::Transport | TaskId::ComplexTransport => Skill::Dump,
        _ => Skill::Walk,
    };
    let gesture = w.humans.iter().find(|h| h.id == tid).map(|h| h.gesture);
    let dist = w.target_distance().unwrap_or(f64::MAX);

    // already there: answer without moving
    if after != Skill::Walk
        && dist < 0.6
        && !(after == Skill::Dump && w.basket_load.is_empty())
        && w.posture != Some(after)
        && (after != Skill::Dump || bearing_to(w, target_xy(w, tid).unwrap_or((0.0, 0.0))).abs() < 1.0)
    {
        let obs = match gesture {
            Some(g) => format!("The person in front of me signals {}.", g.name()),
            None => format!("I am next to the {what}."),
        };
        return walk(vec![], after, obs, format!("Perform {after}."));
    }
    if after == Skill::Dump && w.basket_load.is_empty() {
        return walk(vec![], Skill::StandUp, "The basket is empty.".into(), "Stand by.".into());
    }

    let goal = target_xy(w, tid).unwrap_or((w.robot.x, w.robot.y));
    let me = (w.robot.x, w.robot.y);
    let seen = target_points(w, tid).into_iter().find_map(|p| view.see(&p, tid));
    let obs_target = match gesture {
        Some(g) if g != Gesture::None => format!("A person ahead signals {}.", g.name()),
        _ => format!("The {what} is ahead."),
    };

    if let Some(ob) = blocking_obstacle(w, me, goal, w.rig.robot_radius + PATH_MARGIN) {
        if let Some(d) = detour_waypoint(w, ob, goal) {
            if let Some(dpx) = view.see(&d, crate::sim::legged::FLOOR_ID) {
                let mut kps = vec![dpx];
                let mut s = Skill::Walk;
                if let Some(t) = seen {
                    kps.push(t);
                    s = after;
                }
                return walk(
                    kps,
                    s,
                    format!("{obs_target} An obstacle blocks the direct path."),
                    format!("Walk around the obstacle, then go to the {what}."),
                );
            }
            return turn_toward(w, (d.x, d.y), "way around the obstacle");
        }
    }
    if let Some(t) = seen {
        return walk(vec![t], after, obs_target, format!("Walk to the {what}."));
    }
    let bearing = bearing_to(w, goal);
    if bearing.abs() < 0.7 {
        // in the field of view but hidden: close in along the floor
        let len = (goal.0 - me.0).hypot(goal.1 - me.1);
        let step = (len - 0.6).min(1.5);
        if step > 0.3 {
            let f = step / len;
            let p = Point3::new(me.0 + f * (goal.0 - me.0), me.1 + f * (goal.1 - me.1), 0.0);
            if let Some(px) = view.see(&p, crate::sim::legged::FLOOR_ID) {
                return walk(vec![px], Skill::Walk, format!("The {what} is hidden."), "Move closer.".into());
            }
        }
    }
    // off to the side: swing round along the floor rather than turning on the spot
    if bearing.abs() < FRAC_PI_2 + 0.5 {
        for (reach, cap) in [(1.0, 0.55), (0.8, 0.45), (1.2, 0.35)] {
            let a = w.robot.yaw + bearing.clamp(-cap, cap);
            let p = Point3::new(me.0 + reach * a.cos(), me.1 + reach * a.sin(), 0.0);
            if !path_clear(w, me, (p.x, p.y), w.rig.robot_radius + PATH_MARGIN, None) {
                continue;
            }
            if let Some(px) = view.see(&p, crate::sim::legged::FLOOR_ID) {
                let side = if bearing > 0.0 { "left" } else { "right" };
                return walk(
                    vec![px],
                    Skill::Walk,
                    format!("The {what} is off to the {side}."),
                    format!("Veer {side} towards the {what}."),
                );
            }
        }
    }
    turn_toward(w, goal, what)
}

fn arm(task: TaskId, w: &ArmWorld) -> Decision {
    let prims = w.primitives();
    let view = View {
        cam: w.camera(),
        prims: &prims,
    };
    let act = |s: Skill, kps: Vec<Pixel>, obs: &str, plan: &str| {
        Decision::new(skill(Platform::Arm, s), kps).with_thoughts(obs, plan)
    };
    let idle = || act(Skill::Release, vec![], "Nothing left to do.", "Open the gripper.");

    let pull = || -> Decision {
        let Some(d) = w.drawer else { return idle() };
        let h = d.handle_center();
        let a = h.offset(-0.012, 0.0, 0.0);
        let b = h.offset(0.012, 0.0, 0.0);
        match (view.see(&a, d.handle_id), view.see(&b, d.handle_id)) {
            (Some(pa), Some(pb)) => act(Skill::Pull, vec![pa, pb], "The drawer is half open.", "Hook the handle and pull."),
            _ => idle(),
        }
    };
    let grasp = |id: u32| -> Decision {
        let Some(item) = w.item(id) else { return idle() };
        let (dir, half) = match item.shape {
            Shape::Sphere { radius } => (0.0, radius * 0.6),
            Shape::Cuboid { half, yaw } => {
                if half[0] > half[1] {
                    (yaw + FRAC_PI_2, half[1])
                } else {
                    (yaw, half[0])
                }
            }
        };
        let dir = canonical_yaw(dir);
        let (s, c) = dir.sin_cos();
        let a = item.center.offset(-half * c, -half * s, 0.0);
        let b = item.center.offset(half * c, half * s, 0.0);
        match (view.see(&a, id), view.see(&b, id)) {
            (Some(pa), Some(pb)) if pa != pb => act(Skill::Grasp, vec![pa, pb], "The item is in reach.", "Grasp it across its narrow side."),
            _ => idle(),
        }
    };
    let put = |x: f64, y: f64, z: f64, owner: u32, plan: &str| -> Decision {
        let a = Point3::new(x - 0.04, y, z);
        let b = Point3::new(x + 0.04, y, z);
        match (view.see(&a, owner), view.see(&b, owner)) {
            (Some(pa), Some(pb)) => act(Skill::Release, vec![pa, pb], "I am holding the item.", plan),
            _ => idle(),
        }
    };
    let put_on_table = || put(TABLE_SPOT[0], TABLE_SPOT[1], 0.0, crate::sim::arm::TABLE_ID, "Put it down on the table.");
    let Some(id) = w.target.or(w.items.first().map(|i| i.id)) else {
        return match task {
            TaskId::OpenDrawer if w.drawer.is_some_and(|d| d.fraction < 0.95) => pull(),
            _ => idle(),
        };
    };
    let holding = w.held == Some(id);
    match task {
        TaskId::BananaIn | TaskId::PepperIn => {
            let Some(b) = w.container else { return idle() };
            if holding {
                put(b.x, b.y, WALL, b.id, "Put it into the box.")
            } else if w.item(id).is_some_and(|i| i.place == ArmPlace::Box) {
                idle()
            } else {
                grasp(id)
            }
        }
        TaskId::CarrotOut | TaskId::KiwifruitOut => {
            if holding {
                put_on_table()
            } else if w.item(id).is_some_and(|i| i.place == ArmPlace::Table) {
                idle()
            } else {
                grasp(id)
            }
        }
        TaskId::OpenDrawer => pull(),
        _ => {
            if w.drawer.is_some_and(|d| d.fraction < 0.95) && !holding {
                pull()
            } else if holding {
                put_on_table()
            } else if w.item(id).is_some_and(|i| i.place == ArmPlace::Table) {
                idle()
            } else {
                grasp(id)
            }
        }
    }
}
