use keyloop_core::decision::{Platform, Skill};
use keyloop_core::geometry::*;
use keyloop_core::sim::arm::{ArmPlace, ArmWorld, Gripper};
use keyloop_core::sim::legged::{LeggedObject, LeggedWorld, Place, Pose2};
use keyloop_core::sim::scenes::scene_generator;
use keyloop_core::sim::{Command, ObjectClass, Primitive, Scene, Shape, SimConfig};
use keyloop_core::task::TaskId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn commands() -> impl Strategy<Value = Vec<VelocityCommand>> {
    proptest::collection::vec(
        (-1.0..1.0f64, -1.0..1.0f64, -1.5..1.5f64).prop_map(|(a, b, c)| VelocityCommand::new(a, b, c)),
        1..200,
    )
}

proptest! {
    #[test]
    fn legged_integration_reverses_under_negated_commands(cmds in commands(), yaw in -3.0..3.0f64) {
        let start = Pose2 { x: 0.3, y: -0.2, yaw };
        let mut w = LeggedWorld::empty(start, 1e6);
        for c in &cmds {
            w.step(c, 1.0 / 15.0);
        }
        for c in cmds.iter().rev() {
            w.step(&VelocityCommand::new(-c.vx, -c.vy, -c.vyaw), 1.0 / 15.0);
        }
        prop_assert!((w.robot.x - start.x).abs() < 1e-12, "{:?}", w.robot);
        prop_assert!((w.robot.y - start.y).abs() < 1e-12, "{:?}", w.robot);
        prop_assert!((w.robot.yaw - start.yaw).abs() < 1e-12, "{:?}", w.robot);
    }
}

fn legged_places_consistent(w: &LeggedWorld) -> Result<(), String> {
    let mut seen = HashSet::new();
    for id in w.basket_load.iter().chain(w.bins.iter().flat_map(|b| &b.contents)) {
        if !seen.insert(*id) {
            return Err(format!("object {id} listed twice"));
        }
    }
    for o in &w.objects {
        let listed_basket = w.basket_load.contains(&o.id);
        let listed_bin = w.bins.iter().find(|b| b.contents.contains(&o.id)).map(|b| b.id);
        let ok = match o.place {
            Place::Ground => !listed_basket && listed_bin.is_none(),
            Place::Basket => listed_basket && listed_bin.is_none(),
            Place::Bin(b) => !listed_basket && listed_bin == Some(b),
        };
        if !ok {
            return Err(format!("object {} at {:?} disagrees with containers", o.id, o.place));
        }
    }
    Ok(())
}

fn arm_places_consistent(w: &ArmWorld) -> Result<(), String> {
    if w.held.is_some() && w.gripper != Gripper::Closed {
        return Err("holding with an open gripper".into());
    }
    for i in &w.items {
        let in_hand = w.held == Some(i.id);
        if in_hand != (i.place == ArmPlace::Gripper) {
            return Err(format!("item {} at {:?}, held {:?}", i.id, i.place, w.held));
        }
    }
    Ok(())
}

#[test]
fn legged_skills_conserve_objects() {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pool: Vec<Skill> = Skill::pool(Platform::Legged).collect();
    for task in [TaskId::Transport, TaskId::ComplexTransport] {
        for seed in 0..20 {
            let Scene::Legged(mut w) = scene_generator(task, seed, 0) else { unreachable!() };
            let total = w.objects.len();
            for _ in 0..40 {
                if rng.gen_bool(0.4) && !w.bins.is_empty() {
                    // stand just in front of a random bin, facing it
                    let b = &w.bins[rng.gen_range(0..w.bins.len())];
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = rng.gen_range(0.3..0.9);
                    w.robot = Pose2 { x: b.x + r * a.cos(), y: b.y + r * a.sin(), yaw: a + std::f64::consts::PI };
                }
                let skill = if rng.gen_bool(0.5) { Skill::Dump } else { pool[rng.gen_range(0..pool.len())] };
                w.apply_skill(skill, &cfg);
                assert_eq!(w.objects.len(), total);
                legged_places_consistent(&w).unwrap_or_else(|e| panic!("{task:?} seed {seed}: {e}"));
            }
        }
    }
}

#[test]
fn arm_skills_conserve_items_and_drawer_is_monotone() {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arm_tasks: Vec<TaskId> = TaskId::ALL.into_iter().filter(|t| t.platform() == Platform::Arm).collect();
    for task in arm_tasks {
        for seed in 0..20 {
            let mut scene = scene_generator(task, seed, 0);
            for _ in 0..30 {
                let Scene::Arm(w) = &scene else { unreachable!() };
                let mut spots: Vec<Point3> = w.items.iter().map(|i| i.center).collect();
                if let Some(d) = w.drawer {
                    spots.push(d.handle_center());
                }
                if let Some(b) = w.container {
                    spots.push(Point3::new(b.x, b.y, 0.2));
                }
                let spot = spots[rng.gen_range(0..spots.len())];
                let pose = GraspPose {
                    position: spot.offset(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.05)),
                    yaw: rng.gen_range(0.0..std::f64::consts::PI),
                    mode: if rng.gen_bool(0.5) { GripMode::Grasp } else { GripMode::Hook },
                };
                scene.step(Some(&Command::MoveEe(pose)), &cfg);
                while scene.in_motion() {
                    scene.step(None, &cfg);
                }
                let before = match &scene {
                    Scene::Arm(w) => w.drawer.map(|d| d.fraction),
                    _ => None,
                };
                let skill = [Skill::Grasp, Skill::Release, Skill::Pull][rng.gen_range(0..3)];
                scene.apply_skill(skill, &cfg);
                let Scene::Arm(w) = &scene else { unreachable!() };
                arm_places_consistent(w).unwrap_or_else(|e| panic!("{task:?} seed {seed}: {e}"));
                if let (Some(b), Some(d)) = (before, w.drawer) {
                    assert!(d.fraction >= b, "drawer closed from {b} to {}", d.fraction);
                    if skill == Skill::Pull {
                        assert!((0.0..=1.0).contains(&d.fraction));
                    }
                }
            }
        }
    }
}

#[test]
fn rendering_is_deterministic() {
    let cfg = SimConfig::default();
    for task in TaskId::ALL {
        let scene = scene_generator(task, 9, 1);
        let (a, b) = (scene.render(4, &cfg), scene.render(4, &cfg));
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
    }
}

/// Camera-frame depth of the nearest hit of the pixel ray with the floor
/// plane or a sphere, solved in closed form.
fn analytic_depth(px: &Pixel, cam: &CameraModel, spheres: &[(Point3, f64)]) -> Option<f64> {
    let o = camera_to_world(&Point3::new(0.0, 0.0, 0.0), cam);
    let p1 = camera_to_world(&unproject(px, 1.0, cam).ok()?, cam);
    let d = [p1.x - o.x, p1.y - o.y, p1.z - o.z];
    let mut best = f64::INFINITY;
    if d[2] < 0.0 {
        best = -o.z / d[2];
    }
    for (c, r) in spheres {
        let oc = [o.x - c.x, o.y - c.y, o.z - c.z];
        let a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let b = 2.0 * (oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2]);
        let cc = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - r * r;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t > 0.0 {
                best = best.min(t);
            }
        }
    }
    best.is_finite().then_some(best)
}

#[test]
fn depth_matches_analytic_z_buffer() {
    let cfg = SimConfig { edge_holes: false, ..SimConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut w = LeggedWorld::empty(Pose2 { x: 0.0, y: 0.0, yaw: rng.gen_range(-0.5..0.5) }, 20.0);
        let mut spheres = vec![];
        for i in 0..5 {
            let r = rng.gen_range(0.1..0.4);
            let c = Point3::new(rng.gen_range(1.0..4.0), rng.gen_range(-1.5..1.5), r);
            spheres.push((c, r));
            w.objects.push(LeggedObject { id: 1 + i, class: ObjectClass::Ball, shape: Shape::Sphere { radius: r }, center: c, place: Place::Ground });
        }
        let obs = Scene::Legged(w).render(0, &cfg);
        let mut valid = 0;
        for y in 0..obs.height {
            for x in 0..obs.width {
                let px = Pixel::new(x as f64, y as f64);
                let want = analytic_depth(&px, &obs.camera, &spheres).unwrap_or(0.0);
                let got = obs.depth.get(x as i64, y as i64).unwrap();
                if got > 0.0 {
                    valid += 1;
                    assert!((got - want).abs() < 1e-6, "pixel ({x},{y}): {got} vs {want}");
                }
            }
        }
        assert!(valid > (obs.width * obs.height / 2) as usize);
    }
}

/// Surface point of `p` that most directly faces `eye`: the near pole of a
/// sphere, or the centre of the cuboid face turned most towards the eye.
fn facing_point(p: &Primitive, eye: &Point3) -> Point3 {
    match p.shape {
        Shape::Sphere { radius } => {
            let d = [eye.x - p.center.x, eye.y - p.center.y, eye.z - p.center.z];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            p.center.offset(radius * d[0] / n, radius * d[1] / n, radius * d[2] / n)
        }
        Shape::Cuboid { half, .. } => {
            let e = p.to_local(eye);
            let e = [e.x, e.y, e.z];
            let mut best = (f64::MIN, Point3::new(0.0, 0.0, 0.0));
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut c = [0.0; 3];
                    c[axis] = sign * half[axis];
                    let to_eye = [e[0] - c[0], e[1] - c[1], e[2] - c[2]];
                    let dist = (to_eye[0].powi(2) + to_eye[1].powi(2) + to_eye[2].powi(2)).sqrt();
                    let cos = sign * to_eye[axis] / dist;
                    if cos > best.0 {
                        best = (cos, Point3::new(c[0], c[1], c[2]));
                    }
                }
            }
            p.to_world(&best.1)
        }
    }
}

#[test]
fn visible_anchors_lift_back_within_a_centimetre() {
    let cfg = SimConfig::default();
    let mut checked = 0;
    for task in TaskId::ALL {
        let scene = scene_generator(task, 2, 0);
        let obs = scene.render(0, &cfg);
        let eye = camera_to_world(&Point3::new(0.0, 0.0, 0.0), &obs.camera);
        for p in obs.truth.iter() {
            let anchor = facing_point(p, &eye);
            let Ok(px) = project_world(&anchor, &obs.camera) else { continue };
            if !obs.camera.contains(&px) {
                continue;
            }
            // only anchors that sit exactly on a pixel centre are comparable
            let snapped = px.nearest();
            let Some(d) = obs.depth.get(snapped.0, snapped.1) else { continue };
            let cam_pt = world_to_camera(&anchor, &obs.camera);
            // visible and away from silhouette edges: the 3x3 neighbourhood
            // sees the same surface
            let interior = (-1..=1).all(|dy| {
                (-1..=1).all(|dx| {
                    obs.depth
                        .get(snapped.0 + dx, snapped.1 + dy)
                        .is_some_and(|n| n > 0.0 && (n - cam_pt.z).abs() < 0.01)
                })
            });
            if !interior {
                continue;
            }
            let lifted = camera_to_world(&unproject(&px, d, &obs.camera).unwrap(), &obs.camera);
            assert!(lifted.distance(&anchor) < 0.01, "{task:?} prim {}: {:?} vs {:?}", p.id, lifted, anchor);
            checked += 1;
        }
    }
    assert!(checked >= 14, "only {checked} visible anchors");
}

#[test]
fn generated_scenes_round_trip_through_json() {
    for task in TaskId::ALL {
        let s = scene_generator(task, 4, 3);
        let back = Scene::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.state_hash(), s.state_hash());
    }
}

#[test]
fn complex_find_layouts_block_the_straight_line() {
    for seed in 0..200 {
        let Scene::Legged(w) = scene_generator(TaskId::ComplexFind, seed, 0) else { unreachable!() };
        let t = w.target.expect("target");
        let target = w.objects.iter().find(|o| o.id == t).expect("target object").center;
        let (x0, y0) = (w.robot.x, w.robot.y);
        let blocked = (1..200).any(|i| {
            let f = i as f64 / 200.0;
            let (x, y) = (x0 + f * (target.x - x0), y0 + f * (target.y - y0));
            w.obstacles.iter().any(|o| {
                keyloop_core::sim::footprint_distance(x, y, o.center.x, o.center.y, [o.half[0], o.half[1]], o.yaw) <= 0.0
            })
        });
        assert!(blocked, "seed {seed}: straight path is clear");
    }
}
