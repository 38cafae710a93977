//! Single JSON configuration shared by every entry point.

use crate::adapter::AdapterConfig;
use crate::geometry::ControlLimits;
use crate::sim::SimConfig;
use crate::task::TaskId;
use crate::tracker::TrackerConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config value out of range: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrainKind {
    Oracle,
    Noisy,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrainConfig {
    pub kind: BrainKind,
    /// Noisy brain keypoint noise, px.
    pub sigma_px: f64,
    pub p_wrong_skill: f64,
    pub url: Option<String>,
    pub timeout_s: f64,
    /// Past decisions included in each query.
    pub history: usize,
}

impl Default for BrainConfig {
    fn default() -> Self {
        Self {
            kind: BrainKind::Oracle,
            sigma_px: 5.0,
            p_wrong_skill: 0.05,
            url: None,
            timeout_s: 10.0,
            history: 4,
        }
    }
}

/// Success thresholds and the CI gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Find tasks: robot-to-target footprint distance, metres.
    pub reach_radius: f64,
    pub track_radius: f64,
    /// Track: how long the robot must stay within `track_radius`, seconds.
    pub track_hold_s: f64,
    pub interaction_radius: f64,
    pub drawer_open: f64,
    /// Minimum success rate per task name, in [0, 1].
    pub floors: BTreeMap<String, f64>,
    /// Overrides the per-task trial count.
    pub trials: Option<usize>,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            reach_radius: 0.5,
            track_radius: 0.5,
            track_hold_s: 3.0,
            interaction_radius: 1.0,
            drawer_open: 0.95,
            floors: BTreeMap::new(),
            trials: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub geometry: ControlLimits,
    pub tracker: TrackerConfig,
    pub adapter: AdapterConfig,
    pub brain: BrainConfig,
    pub sim: SimConfig,
    pub benchmark: BenchmarkConfig,
    pub seed: u64,
}

fn ensure(ok: bool, what: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(what.to_string()))
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let c: Config = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        ensure(g.gain > 0.0 && g.gain.is_finite(), "geometry.gain must be > 0")?;
        ensure(g.v_max > 0.0 && g.v_max.is_finite(), "geometry.v_max must be > 0")?;
        ensure(g.yaw_max > 0.0 && g.yaw_max < std::f64::consts::FRAC_PI_2, "geometry.yaw_max must be in (0, π/2)")?;
        ensure(g.eps_v >= 0.0, "geometry.eps_v must be >= 0")?;

        let t = &self.tracker;
        ensure(t.sigma_px >= 0.0 && t.sigma_px.is_finite(), "tracker.sigma_px must be >= 0")?;
        ensure((0.0..1.0).contains(&t.p_drop), "tracker.p_drop must be in [0, 1)")?;
        ensure(t.lost_frames >= 1, "tracker.lost_frames must be >= 1")?;
        ensure(t.template_size >= 3 && t.template_size % 2 == 1, "tracker.template_size must be odd and >= 3")?;
        ensure(t.search_radius >= 1, "tracker.search_radius must be >= 1")?;
        ensure(t.ncc_threshold > -1.0 && t.ncc_threshold <= 1.0, "tracker.ncc_threshold must be in (-1, 1]")?;

        let a = &self.adapter;
        ensure(a.eps_reach > 0.0, "adapter.eps_reach must be > 0")?;
        ensure(a.t_max >= 1, "adapter.t_max must be >= 1")?;
        ensure(a.control_hz > 0.0 && a.brain_hz > 0.0, "adapter rates must be > 0")?;
        ensure(a.brain_hz <= a.control_hz, "adapter.brain_hz must not exceed control_hz")?;
        ensure(a.grasp_descent >= 0.0, "adapter.grasp_descent must be >= 0")?;
        ensure(a.default_skill_ticks >= 1, "adapter.default_skill_ticks must be >= 1")?;
        for (name, n) in &a.skill_ticks {
            ensure(crate::decision::Skill::from_name(name).is_some(), &format!("adapter.skill_ticks: unknown skill {name:?}"))?;
            ensure(*n >= 1, "adapter.skill_ticks entries must be >= 1")?;
        }

        let b = &self.brain;
        ensure(b.sigma_px >= 0.0 && b.sigma_px.is_finite(), "brain.sigma_px must be >= 0")?;
        ensure((0.0..1.0).contains(&b.p_wrong_skill), "brain.p_wrong_skill must be in [0, 1)")?;
        ensure(b.timeout_s > 0.0, "brain.timeout_s must be > 0")?;
        if b.kind == BrainKind::Remote {
            ensure(b.url.as_deref().is_some_and(|u| !u.is_empty()), "brain.url (or BRAIN_URL) is required for the remote brain")?;
        }

        let s = &self.sim;
        ensure(s.dt > 0.0, "sim.dt must be > 0")?;
        ensure(s.r_dump >= 0.0 && s.eps_grasp > 0.0, "sim radii must be positive")?;
        ensure((0.0..=90.0).contains(&s.grasp_yaw_tol_deg), "sim.grasp_yaw_tol_deg must be in [0, 90]")?;
        ensure(s.arm_motion_ticks >= 1, "sim.arm_motion_ticks must be >= 1")?;

        let m = &self.benchmark;
        ensure(
            m.reach_radius > 0.0 && m.track_radius > 0.0 && m.interaction_radius > 0.0,
            "benchmark radii must be > 0",
        )?;
        ensure(m.track_hold_s >= 0.0, "benchmark.track_hold_s must be >= 0")?;
        ensure(m.drawer_open > 0.0 && m.drawer_open <= 1.0, "benchmark.drawer_open must be in (0, 1]")?;
        ensure(m.trials.is_none_or(|n| n >= 1), "benchmark.trials must be >= 1")?;
        for (name, f) in &m.floors {
            ensure(TaskId::from_name(name).is_some(), &format!("benchmark.floors: unknown task {name:?}"))?;
            ensure((0.0..=1.0).contains(f), "benchmark.floors values must be in [0, 1]")?;
        }
        Ok(())
    }
}
