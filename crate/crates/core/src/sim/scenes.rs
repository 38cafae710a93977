//! Seeded task layouts. Each seed jitters positions only; object counts per
//! task are fixed.

use super::arm::{ArmItem, ArmPlace, ArmWorld, Drawer, OpenBox};
use super::legged::{Bin, Human, LeggedObject, LeggedWorld, Mover, Obstacle, Place, Pose2};
use super::{ObjectClass, Scene, Shape};
use crate::geometry::Point3;
use crate::task::{Gesture, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

pub const TARGET_ID: u32 = 1;
pub const OBSTACLE_ID: u32 = 2;
pub const CARGO_ID: u32 = 3;

pub const BOX_ID: u32 = 1;
pub const DRAWER_ID: u32 = 2;
pub const HANDLE_ID: u32 = 4;
pub const ITEM_ID: u32 = 10;

fn rng_for(task: TaskId, seed: u64) -> ChaCha8Rng {
    let salt = TaskId::ALL.iter().position(|t| *t == task).unwrap_or(0) as u64;
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Initial scene for one trial. `trial` picks the gesture in interaction
/// tasks and is ignored elsewhere.
pub fn scene_generator(task: TaskId, seed: u64, trial: usize) -> Scene {
    let mut rng = rng_for(task, seed);
    match task {
        TaskId::BananaIn | TaskId::PepperIn | TaskId::CarrotOut | TaskId::KiwifruitOut => {
            Scene::Arm(box_scene(task, &mut rng))
        }
        TaskId::OpenDrawer | TaskId::LhCarrot | TaskId::LhPepper => Scene::Arm(drawer_scene(task, &mut rng)),
        _ => Scene::Legged(legged_scene(task, task.gesture_for_trial(trial), &mut rng)),
    }
}

fn polar(d: f64, bearing: f64) -> (f64, f64) {
    (d * bearing.cos(), d * bearing.sin())
}

fn legged_scene(task: TaskId, gesture: Gesture, rng: &mut ChaCha8Rng) -> LeggedWorld {
    let robot = Pose2 {
        x: 0.0,
        y: 0.0,
        yaw: rng.gen_range(-0.1..0.1),
    };
    let mut w = LeggedWorld::empty(robot, 12.0);
    w.target = Some(TARGET_ID);
    let complex = task.is_complex();
    let (dist, bearing) = if complex {
        (rng.gen_range(3.6..4.2), robot.yaw + rng.gen_range(-0.12..0.12))
    } else if task == TaskId::Track {
        (rng.gen_range(1.8..2.3), robot.yaw + rng.gen_range(-0.3..0.3))
    } else {
        (rng.gen_range(2.5..3.5), robot.yaw + rng.gen_range(-0.35..0.35))
    };
    let (tx, ty) = polar(dist, bearing);

    match task {
        TaskId::Find | TaskId::Track => {
            let r = 0.1;
            w.objects.push(LeggedObject {
                id: TARGET_ID,
                class: ObjectClass::Ball,
                shape: Shape::Sphere { radius: r },
                center: Point3::new(tx, ty, r),
                place: Place::Ground,
            });
            if task == TaskId::Track {
                let heading = bearing + rng.gen_range(-0.5..0.5);
                let turn = if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
                let side = 2.5;
                let (ax, ay) = polar(side, heading);
                let (bx, by) = polar(side, heading + turn);
                w.mover = Some(Mover {
                    object: TARGET_ID,
                    path: vec![[tx, ty], [tx + ax, ty + ay], [tx + ax + bx, ty + ay + by], [tx + bx, ty + by]],
                    speed: 0.15,
                    travelled: 0.0,
                });
            }
        }
        TaskId::ComplexFind => w.objects.push(LeggedObject {
            id: TARGET_ID,
            class: ObjectClass::Bottle,
            shape: Shape::Cuboid {
                half: [0.07, 0.07, 0.3],
                yaw: rng.gen_range(0.0..PI),
            },
            center: Point3::new(tx, ty, 0.3),
            place: Place::Ground,
        }),
        TaskId::Interaction | TaskId::ComplexInteraction => w.humans.push(Human {
            id: TARGET_ID,
            x: tx,
            y: ty,
            yaw: (robot.y - ty).atan2(robot.x - tx),
            height: rng.gen_range(1.6..1.85),
            gesture,
        }),
        TaskId::Transport | TaskId::ComplexTransport => {
            w.bins.push(Bin {
                id: TARGET_ID,
                x: tx,
                y: ty,
                yaw: bearing + rng.gen_range(-0.3..0.3),
                half: [0.25, 0.25, 0.225],
                contents: vec![],
            });
            w.objects.push(LeggedObject {
                id: CARGO_ID,
                class: ObjectClass::Toy,
                shape: Shape::Sphere { radius: 0.05 },
                center: Point3::new(0.0, 0.0, 0.3),
                place: Place::Basket,
            });
            w.basket_load.push(CARGO_ID);
        }
        _ => unreachable!("arm task in legged generator"),
    }

    if complex {
        // low wall across the straight path, roughly halfway
        let along = dist * rng.gen_range(0.45..0.55);
        let lateral = rng.gen_range(-0.15..0.15);
        let (cx, cy) = polar(along, bearing);
        let (nx, ny) = (-bearing.sin(), bearing.cos());
        w.obstacles.push(Obstacle {
            id: OBSTACLE_ID,
            center: Point3::new(cx + lateral * nx, cy + lateral * ny, 0.125),
            half: [0.1, rng.gen_range(0.5..0.7), 0.125],
            yaw: bearing,
        });
    }
    w
}

fn fruit(task: TaskId) -> (ObjectClass, Shape) {
    match task {
        TaskId::BananaIn => (ObjectClass::Banana, Shape::Cuboid { half: [0.08, 0.018, 0.015], yaw: 0.0 }),
        TaskId::PepperIn | TaskId::LhPepper => (ObjectClass::Pepper, Shape::Sphere { radius: 0.03 }),
        TaskId::CarrotOut | TaskId::LhCarrot => (ObjectClass::Carrot, Shape::Cuboid { half: [0.07, 0.014, 0.014], yaw: 0.0 }),
        TaskId::KiwifruitOut => (ObjectClass::Kiwifruit, Shape::Sphere { radius: 0.028 }),
        _ => unreachable!("task without an item"),
    }
}

fn with_yaw(shape: Shape, yaw: f64) -> Shape {
    match shape {
        Shape::Cuboid { half, .. } => Shape::Cuboid { half, yaw },
        s => s,
    }
}

fn box_scene(task: TaskId, rng: &mut ChaCha8Rng) -> ArmWorld {
    let mut w = ArmWorld::empty();
    let b = OpenBox {
        id: BOX_ID,
        x: 0.55 + rng.gen_range(-0.03..0.03),
        y: -0.25 + rng.gen_range(-0.03..0.03),
        inner_half: [0.1, 0.1],
        wall_height: 0.08,
    };
    w.container = Some(b);
    let (class, shape) = fruit(task);
    let shape = with_yaw(shape, rng.gen_range(0.0..PI));
    let h = shape.half_height();
    let (center, place) = match task {
        TaskId::BananaIn | TaskId::PepperIn => (
            Point3::new(rng.gen_range(0.62..0.8), rng.gen_range(-0.02..0.15), h),
            ArmPlace::Table,
        ),
        _ => (
            Point3::new(b.x + rng.gen_range(-0.02..0.02), b.y + rng.gen_range(-0.02..0.02), 0.01 + h),
            ArmPlace::Box,
        ),
    };
    w.items.push(ArmItem {
        id: ITEM_ID,
        class,
        shape,
        center,
        place,
    });
    w.target = Some(ITEM_ID);
    w
}

fn drawer_scene(task: TaskId, rng: &mut ChaCha8Rng) -> ArmWorld {
    let mut w = ArmWorld::empty();
    let d = Drawer {
        id: DRAWER_ID,
        handle_id: HANDLE_ID,
        x: 0.45 + rng.gen_range(-0.02..0.02),
        y: 0.3 + rng.gen_range(-0.03..0.03),
        fraction: 0.5,
    };
    w.drawer = Some(d);
    if task != TaskId::OpenDrawer {
        let (class, shape) = fruit(task);
        let shape = with_yaw(shape, FRAC_PI_2 + rng.gen_range(-0.2..0.2));
        w.items.push(ArmItem {
            id: ITEM_ID,
            class,
            shape,
            center: Point3::new(d.front() + 0.045, d.y + rng.gen_range(-0.04..0.04), 0.01 + shape.half_height()),
            place: ArmPlace::Drawer,
        });
        w.target = Some(ITEM_ID);
    }
    w
}
