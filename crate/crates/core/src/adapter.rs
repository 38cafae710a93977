//! Turns brain decisions into per-tick commands and hands control back to
//! the brain when tracking fails or a subtask finishes.
//!
//! ```text
//! AwaitBrain --decision with keypoints--> Moving(0)
//! AwaitBrain --skill only--------------> ExecutingSkill(skill, n)
//! AwaitBrain --walk without keypoints--> Failed(InvalidDecision)
//! Moving(i) --waypoint reached---------> Moving(i+1)
//! Moving(last) --reached, walk---------> AwaitBrain   [SubtaskDone]
//! Moving(last) --reached, other skill--> ExecutingSkill(skill, n)
//! Moving(i) --all points lost----------> AwaitBrain   [KeypointsLost]
//! ExecutingSkill(s, 1) ----------------> AwaitBrain   [SkillComplete]
//! ```

use crate::decision::{Decision, DecisionError, Platform, Skill};
use crate::geometry::{
    grasp_from_antipodal, unproject, velocity_command, ControlLimits, GeometryError, GraspPose, GripMode,
    RigidTransform, VelocityCommand,
};
use crate::sim::{Command, Observation};
use crate::tracker::{is_lost, LossRule, PointTracker, TrackedPoint, TrackerError, TrackerState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    InvalidDecision,
    BrainUnavailable,
    Timeout,
    Collision,
    InternalError,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::InvalidDecision => "InvalidDecision",
            FailureReason::BrainUnavailable => "BrainUnavailable",
            FailureReason::Timeout => "Timeout",
            FailureReason::Collision => "Collision",
            FailureReason::InternalError => "InternalError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AdapterMode {
    AwaitBrain,
    Moving { waypoint: usize },
    ExecutingSkill { skill: Skill, ticks_remaining: u32 },
    Done,
    Failed { reason: FailureReason },
}

impl AdapterMode {
    pub fn label(&self) -> &'static str {
        match self {
            AdapterMode::AwaitBrain => "await_brain",
            AdapterMode::Moving { .. } => "moving",
            AdapterMode::ExecutingSkill { .. } => "executing_skill",
            AdapterMode::Done => "done",
            AdapterMode::Failed { .. } => "failed",
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, AdapterMode::Moving { .. } | AdapterMode::ExecutingSkill { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TakeoverCause {
    KeypointsLost,
    SubtaskDone,
    SkillComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeoverEvent {
    pub tick: u64,
    pub cause: TakeoverCause,
    /// Waypoint that was active, if moving.
    pub waypoint: Option<usize>,
    pub points: Vec<TrackedPoint>,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("decision arrived while not awaiting one")]
    NotAwaiting,
    #[error("control tick outside Moving/ExecutingSkill")]
    Inactive,
    #[error("decision rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

impl From<DecisionError> for AdapterError {
    fn from(e: DecisionError) -> Self {
        AdapterError::Rejected(e.to_string())
    }
}

impl From<GeometryError> for AdapterError {
    fn from(e: GeometryError) -> Self {
        AdapterError::Rejected(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    /// Planar distance at which a waypoint counts as reached, metres.
    pub eps_reach: f64,
    /// Ticks between issuing a brain query and its reply.
    pub latency_ticks: u64,
    pub t_max: u64,
    /// Extra attempts after a failed brain reply.
    pub retries: u32,
    pub control_hz: f64,
    pub brain_hz: f64,
    /// Radius for depth hole filling, px.
    pub hole_radius: u32,
    /// How far below the lifted surface point grasps and hooks aim, metres.
    pub grasp_descent: f64,
    pub default_skill_ticks: u32,
    /// Per-skill durations overriding the built-in table.
    pub skill_ticks: BTreeMap<String, u32>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            eps_reach: 0.25,
            latency_ticks: 30,
            t_max: 1800,
            retries: 2,
            control_hz: 15.0,
            brain_hz: 0.5,
            hole_radius: 3,
            grasp_descent: 0.02,
            default_skill_ticks: 15,
            skill_ticks: BTreeMap::new(),
        }
    }
}

impl AdapterConfig {
    pub fn skill_duration(&self, skill: Skill) -> u32 {
        if let Some(n) = self.skill_ticks.get(skill.name()) {
            return (*n).max(1);
        }
        let n = match skill {
            Skill::Dump => 30,
            Skill::Sit | Skill::StandUp | Skill::Jump | Skill::Squat => 15,
            Skill::Shake | Skill::Touch | Skill::Heart | Skill::Scrape => 20,
            Skill::LieDown | Skill::Wallow | Skill::Stretch => 25,
            // a quarter turn at 1 rad/s
            Skill::TurnLeft | Skill::TurnRight => 24,
            Skill::Grasp | Skill::Release => 10,
            Skill::Pull => 15,
            Skill::Walk => self.default_skill_ticks,
        };
        n.max(1)
    }

    /// Minimum ticks between brain queries.
    pub fn query_interval(&self) -> u64 {
        (self.control_hz / self.brain_hz).ceil().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdapterState {
    pub mode: AdapterMode,
    pub tracker: TrackerState,
    pub current_decision: Option<Decision>,
    pub tick: u64,
    /// Arm only: target pose and ticks left in the motion.
    pub ee_target: Option<GraspPose>,
    pub motion_remaining: u32,
}

impl AdapterState {
    pub fn new() -> Self {
        Self {
            mode: AdapterMode::AwaitBrain,
            tracker: TrackerState::empty(0),
            current_decision: None,
            tick: 0,
            ee_target: None,
            motion_remaining: 0,
        }
    }
}

impl Default for AdapterState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub state: AdapterState,
    pub command: Option<Command>,
    pub event: Option<TakeoverEvent>,
    /// Skill whose effect the world should apply now.
    pub skill: Option<Skill>,
}

pub struct Adapter {
    pub config: AdapterConfig,
    pub limits: ControlLimits,
    pub platform: Platform,
    /// Camera-to-body transform (legged only).
    pub body_from_camera: RigidTransform,
    pub lost_frames: u32,
    pub loss_rule: LossRule,
    pub arm_motion_ticks: u32,
    tracker: Box<dyn PointTracker>,
}

impl Adapter {
    pub fn new(
        platform: Platform,
        config: AdapterConfig,
        limits: ControlLimits,
        tracker: Box<dyn PointTracker>,
        lost_frames: u32,
        loss_rule: LossRule,
    ) -> Self {
        Self {
            config,
            limits,
            platform,
            body_from_camera: RigidTransform::identity(),
            lost_frames,
            loss_rule,
            arm_motion_ticks: 15,
            tracker,
        }
    }

    /// Accepts a decision in `AwaitBrain`. `frame` is the frame the brain
    /// was shown; tracks are initialised on it.
    pub fn on_brain_decision(
        &mut self,
        state: &AdapterState,
        d: Decision,
        frame: &Observation,
    ) -> Result<AdapterState, AdapterError> {
        if state.mode != AdapterMode::AwaitBrain {
            return Err(AdapterError::NotAwaiting);
        }
        if d.skill.platform != self.platform || d.skill.skill.platform() != self.platform {
            return Err(AdapterError::Rejected(format!(
                "{} is not in the {} pool",
                d.skill.skill, self.platform
            )));
        }
        let mut next = state.clone();
        if d.skill.skill == Skill::Walk && d.keypoints.is_empty() {
            next.mode = AdapterMode::Failed {
                reason: FailureReason::InvalidDecision,
            };
            next.current_decision = Some(d);
            return Ok(next);
        }
        d.validate()?;
        if d.keypoints.is_empty() {
            next.tracker = TrackerState::empty(frame.frame_id);
            next.mode = AdapterMode::ExecutingSkill {
                skill: d.skill.skill,
                ticks_remaining: self.config.skill_duration(d.skill.skill),
            };
            next.current_decision = Some(d);
            return Ok(next);
        }
        if self.platform == Platform::Arm {
            if d.keypoints.len() != 2 {
                return Err(AdapterError::Rejected("arm motions need exactly two keypoints".into()));
            }
            let mode = if d.skill.skill == Skill::Pull { GripMode::Hook } else { GripMode::Grasp };
            let mut pose = grasp_from_antipodal(
                &d.keypoints[0],
                &d.keypoints[1],
                &frame.depth,
                &frame.camera,
                mode,
                self.config.hole_radius,
            )?;
            if matches!(d.skill.skill, Skill::Grasp | Skill::Pull) {
                pose.position.z = (pose.position.z - self.config.grasp_descent).max(0.0);
            }
            next.ee_target = Some(pose);
            next.motion_remaining = self.arm_motion_ticks.max(1);
        }
        next.tracker = self.tracker.init_tracks(frame, &d.keypoints)?;
        next.mode = AdapterMode::Moving { waypoint: 0 };
        next.current_decision = Some(d);
        Ok(next)
    }

    pub fn control_tick(&mut self, state: &AdapterState, frame: Option<&Observation>, tick: u64) -> Result<TickOutput, AdapterError> {
        let mut next = state.clone();
        next.tick = tick;
        match state.mode {
            AdapterMode::ExecutingSkill { skill, ticks_remaining } => {
                if ticks_remaining <= 1 {
                    next.mode = AdapterMode::AwaitBrain;
                    let event = self.event(&next, tick, TakeoverCause::SkillComplete, None);
                    Ok(TickOutput {
                        state: next,
                        command: self.hold(),
                        event: Some(event),
                        skill: Some(skill),
                    })
                } else {
                    next.mode = AdapterMode::ExecutingSkill {
                        skill,
                        ticks_remaining: ticks_remaining - 1,
                    };
                    Ok(TickOutput {
                        state: next,
                        command: self.hold(),
                        event: None,
                        skill: None,
                    })
                }
            }
            AdapterMode::Moving { waypoint } => {
                let frame = frame.ok_or(AdapterError::Inactive)?;
                next.tracker = self.tracker.update(&state.tracker, frame)?;
                match self.platform {
                    Platform::Legged => self.move_legged(next, frame, waypoint, tick),
                    Platform::Arm => self.move_arm(next, waypoint, tick),
                }
            }
            _ => Err(AdapterError::Inactive),
        }
    }

    fn hold(&self) -> Option<Command> {
        match self.platform {
            Platform::Legged => Some(Command::Velocity(VelocityCommand::ZERO)),
            Platform::Arm => None,
        }
    }

    fn event(&self, state: &AdapterState, tick: u64, cause: TakeoverCause, waypoint: Option<usize>) -> TakeoverEvent {
        TakeoverEvent {
            tick,
            cause,
            waypoint,
            points: state.tracker.points.clone(),
        }
    }

    fn lost(&self, mut next: AdapterState, waypoint: usize, tick: u64) -> Option<TickOutput> {
        if !is_lost(&next.tracker, self.lost_frames, self.loss_rule) {
            return None;
        }
        next.mode = AdapterMode::AwaitBrain;
        let event = self.event(&next, tick, TakeoverCause::KeypointsLost, Some(waypoint));
        Some(TickOutput {
            state: next,
            command: self.hold(),
            event: Some(event),
            skill: None,
        })
    }

    fn move_legged(&mut self, mut next: AdapterState, frame: &Observation, waypoint: usize, tick: u64) -> Result<TickOutput, AdapterError> {
        let mut target = None;
        if let Some(pt) = next.tracker.point(waypoint).copied() {
            if pt.visible {
                match frame.depth.sample(&pt.pixel, self.config.hole_radius) {
                    Ok(d) => {
                        let cam = unproject(&pt.pixel, d, &frame.camera)?;
                        target = Some(self.body_from_camera.apply(&cam));
                    }
                    Err(_) => {
                        if let Some(p) = next.tracker.point_mut(waypoint) {
                            p.miss();
                        }
                    }
                }
            }
        }
        if let Some(out) = self.lost(next.clone(), waypoint, tick) {
            return Ok(out);
        }
        let Some(target) = target else {
            return Ok(TickOutput {
                state: next,
                command: self.hold(),
                event: None,
                skill: None,
            });
        };
        if target.x.hypot(target.y) >= self.config.eps_reach {
            let v = velocity_command(&target, &self.limits)?;
            return Ok(TickOutput {
                state: next,
                command: Some(Command::Velocity(v)),
                event: None,
                skill: None,
            });
        }
        next.tracker.retire(waypoint);
        let decision = next.current_decision.clone().expect("moving implies a decision");
        let mut event = None;
        if waypoint + 1 < decision.keypoints.len() {
            next.mode = AdapterMode::Moving { waypoint: waypoint + 1 };
        } else if decision.skill.skill == Skill::Walk {
            next.mode = AdapterMode::AwaitBrain;
            event = Some(self.event(&next, tick, TakeoverCause::SubtaskDone, Some(waypoint)));
        } else {
            next.mode = AdapterMode::ExecutingSkill {
                skill: decision.skill.skill,
                ticks_remaining: self.config.skill_duration(decision.skill.skill),
            };
        }
        Ok(TickOutput {
            state: next,
            command: self.hold(),
            event,
            skill: None,
        })
    }

    fn move_arm(&mut self, mut next: AdapterState, waypoint: usize, tick: u64) -> Result<TickOutput, AdapterError> {
        if let Some(out) = self.lost(next.clone(), waypoint, tick) {
            return Ok(out);
        }
        let command = (next.motion_remaining == self.arm_motion_ticks.max(1))
            .then(|| next.ee_target.map(Command::MoveEe))
            .flatten();
        next.motion_remaining = next.motion_remaining.saturating_sub(1);
        if next.motion_remaining == 0 {
            let skill = next.current_decision.as_ref().expect("moving implies a decision").skill.skill;
            next.mode = AdapterMode::ExecutingSkill {
                skill,
                ticks_remaining: self.config.skill_duration(skill),
            };
        }
        Ok(TickOutput {
            state: next,
            command,
            event: None,
            skill: None,
        })
    }
}
