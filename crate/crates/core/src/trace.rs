//! Newline-delimited JSON episode log and deterministic replay.

use crate::adapter::{AdapterMode, FailureReason, TakeoverCause};
use crate::brains::{BrainError, BrainReply, ReplayBrain};
use crate::config::Config;
use crate::decision::Skill;
use crate::episode::{run_episode, EpisodeSpec};
use crate::geometry::{Pixel, Point3};
use crate::sim::{Command, Scene, SkillOutcome};
use crate::task::TaskId;
use crate::tracker::TrackedPoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum TraceRecord {
    Header {
        version: u32,
        task: TaskId,
        seed: u64,
        trial: usize,
        brain: String,
        config: Config,
        scene: Scene,
    },
    Query {
        tick: u64,
        frame: u64,
        history: usize,
    },
    Reply {
        tick: u64,
        /// Tick at which the reply is delivered.
        ready: u64,
        text: Option<String>,
        error: Option<String>,
        latency_ticks: u64,
    },
    Decision {
        tick: u64,
        accepted: bool,
        skill: Option<Skill>,
        keypoints: Vec<Pixel>,
        /// Keypoints lifted through the query frame's depth.
        targets: Vec<Point3>,
        error: Option<String>,
    },
    Event {
        tick: u64,
        cause: TakeoverCause,
        waypoint: Option<usize>,
        points: Vec<TrackedPoint>,
    },
    Skill {
        tick: u64,
        skill: Skill,
        outcome: SkillOutcome,
    },
    Tick {
        tick: u64,
        mode: AdapterMode,
        command: Option<Command>,
        /// Legged: x, y, yaw. Arm: end-effector position.
        pose: [f64; 3],
        target_dist: Option<f64>,
        hash: String,
    },
    End {
        tick: u64,
        success: bool,
        cause: Option<FailureReason>,
        takeovers: u32,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace records serialise"))
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for l in self.lines() {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Trace, ReplayError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: TraceRecord = serde_json::from_str(line).map_err(|e| {
                if i == 0 {
                    ReplayError::BadHeader(e.to_string())
                } else {
                    ReplayError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    }
                }
            })?;
            records.push(r);
        }
        Ok(Trace { records })
    }

    pub fn header(&self) -> Option<(&TaskId, u64, usize, &Config, &Scene)> {
        match self.records.first()? {
            TraceRecord::Header {
                task,
                seed,
                trial,
                config,
                scene,
                ..
            } => Some((task, *seed, *trial, config, scene)),
            _ => None,
        }
    }

    pub fn end(&self) -> Option<(bool, Option<FailureReason>)> {
        self.records.iter().rev().find_map(|r| match r {
            TraceRecord::End { success, cause, .. } => Some((*success, *cause)),
            _ => None,
        })
    }

    /// Brain replies in the order they were received.
    pub fn replies(&self) -> Vec<Result<BrainReply, BrainError>> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Reply {
                    text,
                    error,
                    latency_ticks,
                    ..
                } => Some(match (text, error) {
                    (Some(t), _) => Ok(BrainReply {
                        text: t.clone(),
                        latency_ticks: *latency_ticks,
                    }),
                    (None, e) => Err(BrainError::Unavailable(e.clone().unwrap_or_default())),
                }),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace header is missing or invalid: {0}")]
    BadHeader(String),
    #[error("trace line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("replay diverges at line {line} (tick {tick:?})")]
    Divergence { line: usize, tick: Option<u64> },
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub records: usize,
    pub ticks: u64,
    pub success: bool,
    pub trace: Trace,
}

fn record_tick(r: &TraceRecord) -> Option<u64> {
    match r {
        TraceRecord::Header { .. } => None,
        TraceRecord::Query { tick, .. }
        | TraceRecord::Reply { tick, .. }
        | TraceRecord::Decision { tick, .. }
        | TraceRecord::Event { tick, .. }
        | TraceRecord::Skill { tick, .. }
        | TraceRecord::Tick { tick, .. }
        | TraceRecord::End { tick, .. } => Some(*tick),
    }
}

/// Re-runs a recorded episode with its recorded brain replies and checks
/// that every regenerated record matches the original text.
pub fn replay(text: &str) -> Result<ReplayReport, ReplayError> {
    let first = text.lines().next().unwrap_or("");
    let header: TraceRecord = serde_json::from_str(first).map_err(|e| ReplayError::BadHeader(e.to_string()))?;
    let TraceRecord::Header {
        version,
        task,
        seed,
        trial,
        config,
        scene,
        ..
    } = header
    else {
        return Err(ReplayError::BadHeader("first record is not a header".into()));
    };
    if version != TRACE_VERSION {
        return Err(ReplayError::BadHeader(format!("unsupported trace version {version}")));
    }
    config.validate().map_err(|e| ReplayError::BadHeader(e.to_string()))?;
    scene.check().map_err(|e| ReplayError::BadHeader(e.to_string()))?;

    let recorded = Trace::from_ndjson(text)?;
    let mut brain = ReplayBrain::new(recorded.replies());
    let spec = EpisodeSpec { task, seed, trial, scene };
    let label = match &recorded.records[0] {
        TraceRecord::Header { brain, .. } => brain.clone(),
        _ => unreachable!(),
    };
    let run = run_episode(&spec, &mut brain, &config, &label);

    let original: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let regenerated: Vec<String> = run.trace.lines().collect();
    for (i, (a, b)) in original.iter().zip(&regenerated).enumerate() {
        if *a != b {
            return Err(ReplayError::Divergence {
                line: i + 1,
                tick: recorded.records.get(i).and_then(record_tick),
            });
        }
    }
    if original.len() != regenerated.len() {
        let line = original.len().min(regenerated.len()) + 1;
        return Err(ReplayError::Divergence {
            line,
            tick: run.trace.records.get(line - 1).and_then(record_tick),
        });
    }
    Ok(ReplayReport {
        records: regenerated.len(),
        ticks: run.outcome.ticks,
        success: run.outcome.success,
        trace: run.trace,
    })
}
