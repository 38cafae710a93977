//! Scenario builders and check routines shared by the integration suites
//! and the acceptance target.
#![allow(dead_code)]

use keyloop_core::adapter::{Adapter, AdapterConfig, AdapterMode, AdapterState, TakeoverCause};
use keyloop_core::decision::{format_decision, parse_decision, Decision, Platform, Skill, SkillId};
use keyloop_core::geometry::*;
use keyloop_core::sim::legged::{LeggedObject, LeggedWorld, Obstacle, Place, Pose2};
use keyloop_core::sim::{ObjectClass, Observation, Scene, Shape, SimConfig};
use keyloop_core::tracker::{LossRule, OracleTracker, PatchTracker, PointTracker};
use keyloop_core::trace::{Trace, TraceRecord};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::{Duration, Instant};

// ---------------------------------------------------------------- geometry

/// Random intrinsics and extrinsics.
pub fn camera() -> impl Strategy<Value = CameraModel> {
    (
        50.0..800.0f64,
        50.0..800.0f64,
        (64u32..1280, 48u32..960),
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
    )
        .prop_flat_map(|(fx, fy, (w, h), rot, t)| {
            (Just((fx, fy, w, h, rot, t)), 0.0..w as f64, 0.0..h as f64)
        })
        .prop_map(|((fx, fy, w, h, (r, p, y), (tx, ty, tz)), cx, cy)| {
            let rot = Rotation3::from_euler_angles(r, p, y).into_inner();
            CameraModel::new(fx, fy, cx, cy, w, h)
                .unwrap()
                .with_extrinsics(RigidTransform::new(rot, Vector3::new(tx, ty, tz)))
                .unwrap()
        })
}


/// Camera looking straight down from 1 m.
pub fn table_camera() -> CameraModel {
    let rot = nalgebra::Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
    CameraModel::new(150.0, 150.0, 79.5, 59.5, 160, 120)
        .unwrap()
        .with_extrinsics(RigidTransform::new(rot, Vector3::new(0.5, 0.0, 1.0)))
        .unwrap()
}

// ---------------------------------------------------------------- codec

fn skill_for(platform: Platform) -> impl Strategy<Value = Skill> {
    let pool: Vec<Skill> = Skill::pool(platform).collect();
    proptest::sample::select(pool)
}

fn pixel() -> impl Strategy<Value = Pixel> {
    (-1e4..1e4f64, -1e4..1e4f64).prop_map(|(u, v)| Pixel::new(u, v))
}

/// Valid decisions of either platform with free-form thoughts.
pub fn decision() -> impl Strategy<Value = Decision> {
    prop_oneof![Just(Platform::Legged), Just(Platform::Arm)]
        .prop_flat_map(|p| (Just(p), skill_for(p)))
        .prop_flat_map(|(p, s)| {
            let n = match s {
                Skill::Walk => 1..6usize,
                Skill::Grasp => 2..3usize,
                _ => 0..4usize,
            };
            (
                Just(p),
                Just(s),
                proptest::collection::vec(pixel(), n),
                "\\PC{0,60}",
                "[ -~<>&\n]{0,60}",
            )
        })
        .prop_map(|(p, s, kps, obs, plan)| {
            Decision::new(SkillId::new(p, s).unwrap(), kps).with_thoughts(obs, plan)
        })
}

const FRAGMENTS: [&str; 24] = [
    "<decision>", "</decision>", "<point>", "</point>", "<skill>", "</skill>", "<obs>", "</obs>", "<plan>",
    "</plan>", "(", ")", ",", "walk", "grasp", "dump", "1e308", "-", "NaN", "inf", "&lt;", "  ", "\u{1F600}", "0.5",
];
const NOISE: &[char] = &['<', '>', '/', '(', ')', ',', '.', '-', '+', 'e', '0', '7', ' ', '\n', '&', ';', 'é', 'x', '\u{0}'];

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut chars: Vec<char> = base.chars().collect();
    for _ in 0..rng.gen_range(1..6) {
        let len = chars.len();
        match rng.gen_range(0..5) {
            0 => {
                let i = rng.gen_range(0..=len);
                chars.insert(i, NOISE[rng.gen_range(0..NOISE.len())]);
            }
            1 if len > 0 => {
                let i = rng.gen_range(0..len);
                let j = (i + rng.gen_range(1..8)).min(len);
                chars.drain(i..j);
            }
            2 if len > 0 => {
                let i = rng.gen_range(0..len);
                chars[i] = NOISE[rng.gen_range(0..NOISE.len())];
            }
            3 => {
                let i = rng.gen_range(0..=len);
                let frag = FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())];
                for (k, c) in frag.chars().enumerate() {
                    chars.insert(i + k, c);
                }
            }
            _ => chars.truncate(rng.gen_range(0..=len)),
        }
    }
    chars.into_iter().collect()
}

fn soup(rng: &mut ChaCha8Rng) -> String {
    (0..rng.gen_range(0..16))
        .map(|_| FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())])
        .collect()
}

/// Feeds `n` mutated or random texts to the parser. Every accepted text
/// must survive a reformat and reparse unchanged. Returns the count parsed.
pub fn fuzz_parser(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = [
        "<obs>a</obs><plan>b</plan><decision><point>(80,60)</point><skill>walk</skill></decision>",
        "<decision><point>(1.5,2)</point><point>(3,4e1)</point><skill>grasp</skill></decision>",
        "<decision><skill>dump</skill></decision>",
        "text <decision><point>( -3 , 7 )</point><skill>pull</skill></decision> tail",
    ];
    let mut count = 0;
    for i in 0..n {
        let text = if i % 4 == 3 {
            soup(&mut rng)
        } else {
            let base = seeds[rng.gen_range(0..seeds.len())];
            mutate(&mut rng, base)
        };
        for platform in [Platform::Legged, Platform::Arm] {
            if let Ok(d) = parse_decision(&text, platform) {
                let again = parse_decision(&format_decision(&d), platform).expect("reformatted text parses");
                assert_eq!(again, d, "unstable reformat of {text:?}");
            }
        }
        count += 1;
    }
    count
}

// ---------------------------------------------------------------- tracker

/// Static legged world with a scatter of boxes and balls ahead.
pub fn cluttered_world(rng: &mut ChaCha8Rng) -> LeggedWorld {
    let mut w = LeggedWorld::empty(Pose2 { x: 0.0, y: 0.0, yaw: 0.0 }, 20.0);
    for i in 0..6u32 {
        let (x, y) = (rng.gen_range(1.5..5.0), rng.gen_range(-2.0..2.0));
        let shape = if i % 2 == 0 {
            let h = rng.gen_range(0.1..0.5);
            Shape::Cuboid {
                half: [rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4), h],
                yaw: rng.gen_range(0.0..3.0),
            }
        } else {
            Shape::Sphere { radius: rng.gen_range(0.1..0.3) }
        };
        w.objects.push(LeggedObject {
            id: 10 + i,
            class: if i % 2 == 0 { ObjectClass::Toy } else { ObjectClass::Ball },
            center: Point3::new(x, y, shape.half_height()),
            shape,
            place: Place::Ground,
        });
    }
    w
}

/// Pixels with valid depth, drawn uniformly.
pub fn pick_surface_pixels(obs: &Observation, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Pixel, Point3)> {
    let mut out = Vec::new();
    while out.len() < n {
        let (x, y) = (rng.gen_range(2..obs.width - 2), rng.gen_range(2..obs.height - 2));
        let d = obs.depth.get(x as i64, y as i64).unwrap();
        if d > 0.0 {
            let p = Pixel::new(x as f64, y as f64);
            // independent lift: rendered depth through the pinhole model
            let world = camera_to_world(&unproject(&p, d, &obs.camera).unwrap(), &obs.camera);
            out.push((p, world));
        }
    }
    out
}

pub struct OracleExactness {
    pub compared: usize,
    pub worst_error: f64,
    pub mismatched_rounding: usize,
}

/// σ = 0 oracle tracker against `project_world` of the true surface point,
/// over random robot trajectories through cluttered worlds.
pub fn oracle_tracker_exactness(trajectories: usize, points: usize, steps: usize, seed: u64) -> OracleExactness {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = OracleExactness {
        compared: 0,
        worst_error: 0.0,
        mismatched_rounding: 0,
    };
    for _ in 0..trajectories {
        let mut w = cluttered_world(&mut rng);
        w.robot = Pose2 {
            x: rng.gen_range(-0.5..0.5),
            y: rng.gen_range(-0.5..0.5),
            yaw: rng.gen_range(-0.4..0.4),
        };
        let mut scene = Scene::Legged(w);
        let f0 = scene.render(0, &cfg);
        let picks = pick_surface_pixels(&f0, points, &mut rng);
        let kps: Vec<Pixel> = picks.iter().map(|(p, _)| *p).collect();
        let mut tracker = OracleTracker::new(0.0, 0.0, 0);
        let mut state = tracker.init_tracks(&f0, &kps).unwrap();
        let (v, yr) = (rng.gen_range(-0.4..0.6), rng.gen_range(-0.6..0.6));
        for step in 1..=steps as u64 {
            if let Scene::Legged(w) = &mut scene {
                w.robot.x += v * w.robot.yaw.cos() / 15.0;
                w.robot.y += v * w.robot.yaw.sin() / 15.0;
                w.robot.yaw += yr / 15.0;
            }
            let f = scene.render(step, &cfg);
            state = tracker.update(&state, &f).unwrap();
            for (pt, (_, world)) in state.points.iter().zip(&picks) {
                if !pt.visible {
                    continue;
                }
                let truth = project_world(world, &f.camera).unwrap();
                let err = (truth.u - pt.pixel.u).abs().max((truth.v - pt.pixel.v).abs());
                r.worst_error = r.worst_error.max(err);
                if truth.nearest() != pt.pixel.nearest() {
                    r.mismatched_rounding += 1;
                }
                r.compared += 1;
            }
        }
    }
    r
}

/// Textured grey frame; `shift` moves the content by whole pixels.
pub fn textured_frame(frame_id: u64, seed: u64, shift: (i64, i64)) -> Observation {
    let (w, h) = (160u32, 120u32);
    let tex = |x: i64, y: i64| -> u8 {
        let mut z = (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f) ^ seed;
        z = (z ^ (z >> 29)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        (z >> 56) as u8
    };
    let mut rgb = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let g = tex(x - shift.0, y - shift.1);
            rgb.extend([g, g, g]);
        }
    }
    Observation {
        frame_id,
        width: w,
        height: h,
        rgb,
        depth: DepthImage::filled(w, h, 1.0),
        camera: CameraModel::new(75.0, 75.0, 79.5, 59.5, w, h).unwrap(),
        truth: Arc::new(vec![]),
    }
}

/// Shifts in `[-max, max]²` the patch tracker failed to recover exactly.
pub fn patch_shift_failures(max: i64) -> Vec<(i64, i64)> {
    let mut bad = Vec::new();
    let start = Pixel::new(80.0, 60.0);
    for dy in -max..=max {
        for dx in -max..=max {
            let mut t = PatchTracker::new(11, max as u32, 0.6);
            let s = t.init_tracks(&textured_frame(0, 5, (0, 0)), &[start]).unwrap();
            let s = t.update(&s, &textured_frame(1, 5, (dx, dy))).unwrap();
            let p = s.points[0];
            if !(p.visible && p.pixel == Pixel::new(start.u + dx as f64, start.v + dy as f64)) {
                bad.push((dx, dy));
            }
        }
    }
    bad
}

// ---------------------------------------------------------------- takeover

pub fn walk_to(kps: Vec<Pixel>) -> Decision {
    Decision::new(SkillId::new(Platform::Legged, Skill::Walk).unwrap(), kps)
}

pub fn legged_adapter(w: &LeggedWorld, tracker: Box<dyn PointTracker>, k: u32) -> Adapter {
    let mut a = Adapter::new(
        Platform::Legged,
        AdapterConfig::default(),
        ControlLimits::default(),
        tracker,
        k,
        LossRule::All,
    );
    a.body_from_camera = w.rig.body_from_camera();
    a
}

/// Robot tracking a ball 2.5 m ahead; a wall drops in front of it after the
/// decision is accepted. Returns the number of occluded control ticks
/// before the `KeypointsLost` event, or `None` if none came within 50.
pub fn occlusion_takeover_tick(k: u32) -> Option<u64> {
    let cfg = SimConfig::default();
    let mut w = LeggedWorld::empty(Pose2 { x: 0.0, y: 0.0, yaw: 0.0 }, 10.0);
    w.objects.push(LeggedObject {
        id: 1,
        class: ObjectClass::Ball,
        shape: Shape::Sphere { radius: 0.15 },
        center: Point3::new(2.5, 0.0, 0.15),
        place: Place::Ground,
    });
    let mut scene = Scene::Legged(w.clone());
    let mut adapter = legged_adapter(&w, Box::new(OracleTracker::new(0.0, 0.0, 0)), k);
    let f0 = scene.render(0, &cfg);
    let ball = project_world(&Point3::new(2.5, 0.0, 0.15), &f0.camera).unwrap();
    let mut state = adapter.on_brain_decision(&AdapterState::new(), walk_to(vec![ball]), &f0).ok()?;
    if let Scene::Legged(w) = &mut scene {
        w.obstacles.push(Obstacle {
            id: 2,
            center: Point3::new(1.4, 0.0, 0.6),
            half: [0.05, 1.5, 0.6],
            yaw: 0.0,
        });
    }
    for tick in 1..=50u64 {
        let f = scene.render(tick, &cfg);
        let out = adapter.control_tick(&state, Some(&f), tick).ok()?;
        if let Some(e) = out.event {
            return (e.cause == TakeoverCause::KeypointsLost).then_some(tick);
        }
        scene.step(out.command.as_ref(), &cfg);
        state = out.state;
    }
    None
}

/// Checks the pairing between entries into `AwaitBrain` from an active
/// mode and takeover events. Returns a description of the first problem.
pub fn check_transition_pairing(trace: &Trace) -> Result<usize, String> {
    let mut prev = AdapterMode::AwaitBrain;
    let mut events_this_tick = 0usize;
    let mut transitions = 0usize;
    let mut current_tick = None;
    for r in &trace.records {
        match r {
            TraceRecord::Event { tick, .. } => {
                if current_tick != Some(*tick) {
                    current_tick = Some(*tick);
                    events_this_tick = 0;
                }
                events_this_tick += 1;
            }
            TraceRecord::Tick { tick, mode, .. } => {
                let events = if current_tick == Some(*tick) { events_this_tick } else { 0 };
                let entered = prev.is_active() && *mode == AdapterMode::AwaitBrain;
                if entered {
                    transitions += 1;
                    if events != 1 {
                        return Err(format!("tick {tick}: active -> await with {events} events"));
                    }
                } else if events != 0 {
                    return Err(format!("tick {tick}: {events} events without a transition into await_brain"));
                }
                let legal = match (prev, *mode) {
                    (a, b) if a == b => true,
                    (AdapterMode::AwaitBrain, _) => true,
                    (AdapterMode::Moving { .. }, _) => true,
                    (AdapterMode::ExecutingSkill { .. }, AdapterMode::ExecutingSkill { .. }) => true,
                    (AdapterMode::ExecutingSkill { .. }, AdapterMode::AwaitBrain | AdapterMode::Failed { .. }) => true,
                    _ => false,
                };
                if !legal {
                    return Err(format!("tick {tick}: illegal transition {prev:?} -> {mode:?}"));
                }
                prev = *mode;
            }
            _ => {}
        }
    }
    Ok(transitions)
}

// ---------------------------------------------------------------- timing

/// Wall time of full legged control ticks (render, 8-point tracker update,
/// command) over `ticks` frames; returns the slowest and the mean.
pub fn control_tick_timing(ticks: u64) -> (Duration, Duration) {
    let cfg = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = cluttered_world(&mut rng);
    let mut scene = Scene::Legged(w.clone());
    let f0 = scene.render(0, &cfg);
    let kps: Vec<Pixel> = pick_surface_pixels(&f0, 8, &mut rng).into_iter().map(|(p, _)| p).collect();
    let mut adapter = legged_adapter(&w, Box::new(OracleTracker::new(0.0, 0.0, 1)), 1000);
    let mut state = adapter.on_brain_decision(&AdapterState::new(), walk_to(kps), &f0).unwrap();
    let mut worst = Duration::ZERO;
    let mut total = Duration::ZERO;
    for tick in 1..=ticks {
        let t0 = Instant::now();
        let f = scene.render(tick, &cfg);
        let out = adapter.control_tick(&state, Some(&f), tick).unwrap();
        let dt = t0.elapsed();
        worst = worst.max(dt);
        total += dt;
        scene.step(out.command.as_ref(), &cfg);
        state = out.state;
        if !state.mode.is_active() {
            break;
        }
    }
    (worst, total / ticks as u32)
}
