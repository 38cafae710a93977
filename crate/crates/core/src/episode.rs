//! The closed loop: brain queries with tick latency, adapter control ticks,
//! skill effects and simulator steps, all logged to a trace.

use crate::adapter::{Adapter, AdapterMode, AdapterState, FailureReason, TakeoverCause};
use crate::benchmark::SuccessMonitor;
use crate::brains::{Brain, BrainError, BrainQuery, BrainReply, HistoryEntry, NoisyBrain, OracleBrain, RemoteBrain};
use crate::config::{BrainKind, BrainConfig, Config};
use crate::decision::parse_decision;
use crate::geometry::{unproject, camera_to_world, Point3};
use crate::sim::{scene_generator, Observation, Scene};
use crate::task::TaskId;
use crate::trace::{Trace, TraceRecord, TRACE_VERSION};
use std::collections::VecDeque;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub task: TaskId,
    pub seed: u64,
    pub trial: usize,
    pub scene: Scene,
}

impl EpisodeSpec {
    pub fn generated(task: TaskId, seed: u64, trial: usize) -> Self {
        Self {
            task,
            seed,
            trial,
            scene: scene_generator(task, seed, trial),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub cause: Option<FailureReason>,
    /// Ticks simulated.
    pub ticks: u64,
    pub takeovers: u32,
    pub lost_takeovers: u32,
    pub queries: u32,
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub outcome: EpisodeOutcome,
    pub trace: Trace,
    pub final_scene: Scene,
}

/// Independent sub-seed for one consumer of randomness.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TRACKER_STREAM: u64 = 1;
const BRAIN_STREAM: u64 = 2;

pub fn tracker_seed(seed: u64) -> u64 {
    derive_seed(seed, TRACKER_STREAM)
}

pub fn build_brain(cfg: &BrainConfig, seed: u64) -> Result<Box<dyn Brain>, BrainError> {
    Ok(match cfg.kind {
        BrainKind::Oracle => Box::new(OracleBrain),
        BrainKind::Noisy => Box::new(NoisyBrain::new(cfg.sigma_px, cfg.p_wrong_skill, derive_seed(seed, BRAIN_STREAM))),
        BrainKind::Remote => {
            let url = cfg
                .url
                .clone()
                .ok_or_else(|| BrainError::Unavailable("no brain URL configured".into()))?;
            Box::new(RemoteBrain::new(url, Duration::from_secs_f64(cfg.timeout_s))?)
        }
    })
}

pub fn brain_label(cfg: &BrainConfig) -> String {
    match cfg.kind {
        BrainKind::Oracle => "oracle".into(),
        BrainKind::Noisy => format!("noisy(sigma_px={}, p_wrong_skill={})", cfg.sigma_px, cfg.p_wrong_skill),
        BrainKind::Remote => "remote".into(),
    }
}

struct Pending {
    ready: u64,
    reply: Result<BrainReply, BrainError>,
    frame: Observation,
}

fn lift_keypoints(frame: &Observation, points: &[crate::geometry::Pixel], hole_radius: u32) -> Vec<Point3> {
    points
        .iter()
        .filter_map(|p| {
            let z = frame.depth.sample(p, hole_radius).ok()?;
            let c = unproject(p, z, &frame.camera).ok()?;
            Some(camera_to_world(&c, &frame.camera))
        })
        .collect()
}

/// Runs one episode to success, failure or timeout.
pub fn run_episode(spec: &EpisodeSpec, brain: &mut dyn Brain, config: &Config, brain_name: &str) -> EpisodeRun {
    let mut scene = spec.scene.clone();
    let platform = scene.platform();
    let ac = &config.adapter;
    let mut adapter = Adapter::new(
        platform,
        ac.clone(),
        config.geometry,
        config.tracker.build(tracker_seed(spec.seed)),
        config.tracker.lost_frames,
        config.tracker.loss_rule,
    );
    adapter.arm_motion_ticks = config.sim.arm_motion_ticks;
    if let Scene::Legged(w) = &scene {
        adapter.body_from_camera = w.rig.body_from_camera();
    }
    let mut monitor = SuccessMonitor::new(spec.task, &config.benchmark, ac.control_hz);

    let mut trace = Trace::default();
    trace.push(TraceRecord::Header {
        version: TRACE_VERSION,
        task: spec.task,
        seed: spec.seed,
        trial: spec.trial,
        brain: brain_name.to_string(),
        config: config.clone(),
        scene: spec.scene.clone(),
    });

    let interval = ac.query_interval();
    let mut state = AdapterState::new();
    let mut pending: Option<Pending> = None;
    let mut next_query = 0u64;
    let mut failures = 0u32;
    let mut history: VecDeque<HistoryEntry> = VecDeque::new();
    let mut last_cause: Option<TakeoverCause> = None;
    let mut takeovers = 0u32;
    let mut lost_takeovers = 0u32;
    let mut queries = 0u32;
    let mut tick = 0u64;

    let (success, cause) = loop {
        if scene.collided() {
            break (false, Some(FailureReason::Collision));
        }
        if monitor.satisfied(&scene) {
            state.mode = AdapterMode::Done;
            break (true, None);
        }
        if let AdapterMode::Failed { reason } = state.mode {
            break (false, Some(reason));
        }
        if tick >= ac.t_max {
            break (false, Some(FailureReason::Timeout));
        }

        if state.mode == AdapterMode::AwaitBrain {
            if pending.as_ref().is_some_and(|p| tick >= p.ready) {
                let p = pending.take().expect("checked above");
                let text = p.reply.as_ref().ok().map(|r| r.text.clone());
                let parsed = p
                    .reply
                    .map_err(|e| (FailureReason::BrainUnavailable, e.to_string()))
                    .and_then(|r| {
                        parse_decision(&r.text, platform).map_err(|e| (FailureReason::InvalidDecision, e.to_string()))
                    });
                let result = parsed.and_then(|d| {
                    let keypoints = d.keypoints.clone();
                    let skill = d.skill.skill;
                    adapter
                        .on_brain_decision(&state, d, &p.frame)
                        .map(|s| (s, keypoints, skill))
                        .map_err(|e| (FailureReason::InvalidDecision, e.to_string()))
                });
                match result {
                    Ok((next, keypoints, skill)) => {
                        trace.push(TraceRecord::Decision {
                            tick,
                            accepted: true,
                            skill: Some(skill),
                            targets: lift_keypoints(&p.frame, &keypoints, ac.hole_radius),
                            keypoints,
                            error: None,
                        });
                        failures = 0;
                        state = next;
                    }
                    Err((reason, message)) => {
                        trace.push(TraceRecord::Decision {
                            tick,
                            accepted: false,
                            skill: None,
                            keypoints: vec![],
                            targets: vec![],
                            error: Some(message),
                        });
                        failures += 1;
                        if failures > ac.retries {
                            state.mode = AdapterMode::Failed { reason };
                        }
                    }
                }
                if let Some(text) = text {
                    history.push_back(HistoryEntry {
                        tick,
                        decision: text,
                        cause: last_cause,
                    });
                    while history.len() > config.brain.history {
                        history.pop_front();
                    }
                }
            }
            if state.mode == AdapterMode::AwaitBrain && pending.is_none() && tick >= next_query {
                let frame = scene.render(tick, &config.sim);
                let query = BrainQuery {
                    tick,
                    task: spec.task,
                    prompt: spec.task.prompt().to_string(),
                    observation: frame,
                    history: history.iter().cloned().collect(),
                };
                trace.push(TraceRecord::Query {
                    tick,
                    frame: tick,
                    history: query.history.len(),
                });
                let reply = brain.decide(&query, &scene);
                let extra = reply.as_ref().map_or(0, |r| r.latency_ticks);
                let ready = tick + ac.latency_ticks + extra;
                trace.push(TraceRecord::Reply {
                    tick,
                    ready,
                    text: reply.as_ref().ok().map(|r| r.text.clone()),
                    error: reply.as_ref().err().map(|e| match e {
                        BrainError::Unavailable(m) => m.clone(),
                    }),
                    latency_ticks: extra,
                });
                queries += 1;
                pending = Some(Pending {
                    ready,
                    reply,
                    frame: query.observation,
                });
                next_query = tick + interval;
            }
        }

        let mut command = None;
        if state.mode.is_active() {
            let frame = matches!(state.mode, AdapterMode::Moving { .. }).then(|| scene.render(tick, &config.sim));
            match adapter.control_tick(&state, frame.as_ref(), tick) {
                Ok(out) => {
                    command = out.command;
                    if let Some(skill) = out.skill {
                        let outcome = scene.apply_skill(skill, &config.sim);
                        trace.push(TraceRecord::Skill { tick, skill, outcome });
                    }
                    if let Some(ev) = out.event {
                        takeovers += 1;
                        if ev.cause == TakeoverCause::KeypointsLost {
                            lost_takeovers += 1;
                        }
                        last_cause = Some(ev.cause);
                        trace.push(TraceRecord::Event {
                            tick,
                            cause: ev.cause,
                            waypoint: ev.waypoint,
                            points: ev.points,
                        });
                    }
                    state = out.state;
                }
                Err(e) => {
                    log::error!("control tick {tick} failed: {e}");
                    state.mode = AdapterMode::Failed {
                        reason: FailureReason::InternalError,
                    };
                }
            }
        }

        scene.step(command.as_ref(), &config.sim);
        monitor.observe(&scene);
        trace.push(TraceRecord::Tick {
            tick,
            mode: state.mode,
            command,
            pose: scene.pose(),
            target_dist: scene.target_distance(),
            hash: scene.state_hash(),
        });
        tick += 1;
    };

    trace.push(TraceRecord::End {
        tick,
        success,
        cause,
        takeovers,
    });
    EpisodeRun {
        outcome: EpisodeOutcome {
            success,
            cause,
            ticks: tick,
            takeovers,
            lost_takeovers,
            queries,
        },
        trace,
        final_scene: scene,
    }
}
