//! Decision sources behind one boundary: a privileged oracle, a noisy
//! wrapper around it, an HTTP client, and fixed/replayed scripts.

mod oracle;
mod remote;

pub use oracle::{detour_waypoint, OracleBrain};
pub use remote::RemoteBrain;

use crate::adapter::TakeoverCause;
use crate::decision::{format_decision, parse_decision, Skill, SkillId};
use crate::geometry::Pixel;
use crate::sim::{Observation, Scene};
use crate::task::TaskId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrainError {
    #[error("brain unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub tick: u64,
    pub decision: String,
    pub cause: Option<TakeoverCause>,
}

#[derive(Debug, Clone)]
pub struct BrainQuery {
    pub tick: u64,
    pub task: TaskId,
    pub prompt: String,
    pub observation: Observation,
    /// Oldest first.
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrainReply {
    pub text: String,
    /// Extra delay on top of the configured query latency.
    pub latency_ticks: u64,
}

impl BrainReply {
    pub fn immediate(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency_ticks: 0,
        }
    }
}

pub trait Brain: Send {
    /// `world` is the privileged state at query time; only oracles read it.
    fn decide(&mut self, query: &BrainQuery, world: &Scene) -> Result<BrainReply, BrainError>;
}

/// Oracle output with Gaussian keypoint noise and random skill swaps.
pub struct NoisyBrain {
    base: OracleBrain,
    noise: Normal<f64>,
    sigma: f64,
    p_wrong_skill: f64,
    rng: ChaCha8Rng,
}

impl NoisyBrain {
    pub fn new(sigma_px: f64, p_wrong_skill: f64, seed: u64) -> Self {
        Self {
            base: OracleBrain,
            noise: Normal::new(0.0, sigma_px.max(f64::MIN_POSITIVE)).expect("finite sigma"),
            sigma: sigma_px.max(0.0),
            p_wrong_skill: p_wrong_skill.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Applies the perturbation to an oracle decision text.
    pub fn perturb(&mut self, oracle_text: &str, platform: crate::decision::Platform) -> String {
        let mut d = parse_decision(oracle_text, platform).expect("oracle text parses");
        if self.sigma > 0.0 {
            for p in &mut d.keypoints {
                *p = Pixel::new(p.u + self.noise.sample(&mut self.rng), p.v + self.noise.sample(&mut self.rng));
            }
        }
        if self.rng.gen_bool(self.p_wrong_skill) {
            let others: Vec<Skill> = Skill::pool(platform).filter(|s| *s != d.skill.skill).collect();
            let s = *others.choose(&mut self.rng).expect("pool has alternatives");
            d.skill = SkillId { platform, skill: s };
        }
        format_decision(&d)
    }
}

impl Brain for NoisyBrain {
    fn decide(&mut self, query: &BrainQuery, world: &Scene) -> Result<BrainReply, BrainError> {
        let reply = self.base.decide(query, world)?;
        Ok(BrainReply {
            text: self.perturb(&reply.text, world.platform()),
            latency_ticks: reply.latency_ticks,
        })
    }
}

/// Answers with a fixed list of texts, repeating the last one.
pub struct ScriptedBrain {
    replies: Vec<Result<String, BrainError>>,
    next: usize,
}

impl ScriptedBrain {
    pub fn new(replies: Vec<Result<String, BrainError>>) -> Self {
        assert!(!replies.is_empty(), "script needs at least one reply");
        Self { replies, next: 0 }
    }

    pub fn always(text: impl Into<String>) -> Self {
        Self::new(vec![Ok(text.into())])
    }
}

impl Brain for ScriptedBrain {
    fn decide(&mut self, _: &BrainQuery, _: &Scene) -> Result<BrainReply, BrainError> {
        let i = self.next.min(self.replies.len() - 1);
        self.next += 1;
        self.replies[i].clone().map(BrainReply::immediate)
    }
}

/// Serves replies recorded in a trace, in order.
pub struct ReplayBrain {
    replies: VecDeque<Result<BrainReply, BrainError>>,
}

impl ReplayBrain {
    pub fn new(replies: impl IntoIterator<Item = Result<BrainReply, BrainError>>) -> Self {
        Self {
            replies: replies.into_iter().collect(),
        }
    }
}

impl Brain for ReplayBrain {
    fn decide(&mut self, _: &BrainQuery, _: &Scene) -> Result<BrainReply, BrainError> {
        self.replies
            .pop_front()
            .unwrap_or_else(|| Err(BrainError::Unavailable("trace has no more replies".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Platform;

    const TEXT: &str = "<obs>o</obs><plan>p</plan><decision><point>(80,60)</point><skill>walk</skill></decision>";

    #[test]
    fn zero_noise_is_identity() {
        let mut b = NoisyBrain::new(0.0, 0.0, 1);
        let out = b.perturb(TEXT, Platform::Legged);
        assert_eq!(parse_decision(&out, Platform::Legged).unwrap(), parse_decision(TEXT, Platform::Legged).unwrap());
    }

    #[test]
    fn forced_corruption_always_changes_skill() {
        let mut b = NoisyBrain::new(0.0, 1.0, 2);
        for _ in 0..200 {
            let d = parse_decision(&b.perturb(TEXT, Platform::Legged), Platform::Legged).unwrap();
            assert_ne!(d.skill.skill, Skill::Walk);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let a = NoisyBrain::new(5.0, 0.05, 9).perturb(TEXT, Platform::Legged);
        let b = NoisyBrain::new(5.0, 0.05, 9).perturb(TEXT, Platform::Legged);
        assert_eq!(a, b);
    }
}
