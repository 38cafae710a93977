//! Brain output text <-> typed [`Decision`].
//!
//! Normative grammar (whitespace between tokens is ignored):
//!
//! ```text
//! block    := obs? plan? decision
//! obs      := "<obs>" TEXT "</obs>"
//! plan     := "<plan>" TEXT "</plan>"
//! decision := "<decision>" point* skill "</decision>"
//! point    := "<point>" "(" FLOAT "," FLOAT ")" "</point>"
//! skill    := "<skill>" IDENT "</skill>"
//! ```
//!
//! `TEXT` escapes `&`, `<` and `>` as XML entities. When several decision
//! blocks appear, the last delimited one wins; the `obs`/`plan` sections
//! considered are those between it and the previous block.

use crate::geometry::Pixel;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecisionError {
    #[error("no <decision>...</decision> block found")]
    NoDecisionBlock,
    #[error("malformed point: {0}")]
    MalformedPoint(String),
    #[error("malformed decision block: {0}")]
    MalformedDecision(String),
    #[error("unknown skill '{0}' for this platform")]
    UnknownSkill(String),
    #[error("invalid decision: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Legged,
    Arm,
}

impl Platform {
    pub fn name(self) -> &'static str {
        match self {
            Platform::Legged => "legged",
            Platform::Arm => "arm",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Dump,
    Touch,
    Shake,
    Jump,
    Scrape,
    Squat,
    Heart,
    TurnRight,
    TurnLeft,
    Sit,
    Wallow,
    LieDown,
    StandUp,
    Stretch,
    Walk,
    Grasp,
    Release,
    Pull,
}

impl Skill {
    pub const ALL: [Skill; 18] = [
        Skill::Dump,
        Skill::Touch,
        Skill::Shake,
        Skill::Jump,
        Skill::Scrape,
        Skill::Squat,
        Skill::Heart,
        Skill::TurnRight,
        Skill::TurnLeft,
        Skill::Sit,
        Skill::Wallow,
        Skill::LieDown,
        Skill::StandUp,
        Skill::Stretch,
        Skill::Walk,
        Skill::Grasp,
        Skill::Release,
        Skill::Pull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Skill::Dump => "dump",
            Skill::Touch => "touch",
            Skill::Shake => "shake",
            Skill::Jump => "jump",
            Skill::Scrape => "scrape",
            Skill::Squat => "squat",
            Skill::Heart => "heart",
            Skill::TurnRight => "turn_right",
            Skill::TurnLeft => "turn_left",
            Skill::Sit => "sit",
            Skill::Wallow => "wallow",
            Skill::LieDown => "lie_down",
            Skill::StandUp => "stand_up",
            Skill::Stretch => "stretch",
            Skill::Walk => "walk",
            Skill::Grasp => "grasp",
            Skill::Release => "release",
            Skill::Pull => "pull",
        }
    }

    pub fn from_name(name: &str) -> Option<Skill> {
        Skill::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn platform(self) -> Platform {
        match self {
            Skill::Grasp | Skill::Release | Skill::Pull => Platform::Arm,
            _ => Platform::Legged,
        }
    }

    /// Skills available on `platform`, in pool order.
    pub fn pool(platform: Platform) -> impl Iterator<Item = Skill> {
        Skill::ALL.into_iter().filter(move |s| s.platform() == platform)
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A skill known to be in the policy pool of its platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkillId {
    pub platform: Platform,
    pub skill: Skill,
}

impl SkillId {
    pub fn new(platform: Platform, skill: Skill) -> Result<Self, DecisionError> {
        if skill.platform() != platform {
            return Err(DecisionError::UnknownSkill(skill.name().to_string()));
        }
        Ok(Self { platform, skill })
    }
}

pub fn validate_skill(name: &str, platform: Platform) -> Result<SkillId, DecisionError> {
    Skill::from_name(name)
        .filter(|s| s.platform() == platform)
        .map(|skill| SkillId { platform, skill })
        .ok_or_else(|| DecisionError::UnknownSkill(name.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decision {
    pub observation: String,
    pub plan: String,
    pub keypoints: Vec<Pixel>,
    pub skill: SkillId,
    /// Text this decision was parsed from; empty for constructed values.
    #[serde(default)]
    pub raw_text: String,
}

/// Equality ignores `raw_text`.
impl PartialEq for Decision {
    fn eq(&self, other: &Self) -> bool {
        self.observation == other.observation
            && self.plan == other.plan
            && self.keypoints == other.keypoints
            && self.skill == other.skill
    }
}

impl Decision {
    pub fn new(skill: SkillId, keypoints: Vec<Pixel>) -> Self {
        Self {
            observation: String::new(),
            plan: String::new(),
            keypoints,
            skill,
            raw_text: String::new(),
        }
    }

    pub fn with_thoughts(mut self, observation: impl Into<String>, plan: impl Into<String>) -> Self {
        self.observation = observation.into();
        self.plan = plan.into();
        self
    }

    /// Checks the structural invariants: finite keypoints, a movement
    /// decision carries a target, a grasp carries exactly two contacts.
    pub fn validate(&self) -> Result<(), DecisionError> {
        if self.skill.skill.platform() != self.skill.platform {
            return Err(DecisionError::UnknownSkill(self.skill.skill.name().into()));
        }
        if let Some(p) = self.keypoints.iter().find(|p| !p.is_finite()) {
            return Err(DecisionError::Invalid(format!(
                "non-finite keypoint ({}, {})",
                p.u, p.v
            )));
        }
        match self.skill.skill {
            Skill::Walk if self.keypoints.is_empty() => Err(DecisionError::Invalid(
                "walk requires at least one keypoint".into(),
            )),
            Skill::Grasp if self.keypoints.len() != 2 => Err(DecisionError::Invalid(format!(
                "grasp requires exactly 2 keypoints, got {}",
                self.keypoints.len()
            ))),
            _ => Ok(()),
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn unescape(text: &str) -> String {
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

pub fn serialize_decision(d: &Decision) -> Result<String, DecisionError> {
    d.validate()?;
    Ok(format_decision(d))
}

/// Renders `d` in the grammar without checking its invariants.
pub fn format_decision(d: &Decision) -> String {
    let mut out = String::new();
    out.push_str("<obs>");
    out.push_str(&escape(&d.observation));
    out.push_str("</obs><plan>");
    out.push_str(&escape(&d.plan));
    out.push_str("</plan><decision>");
    for p in &d.keypoints {
        out.push_str(&format!("<point>({},{})</point>", p.u, p.v));
    }
    out.push_str(&format!("<skill>{}</skill></decision>", d.skill.skill.name()));
    out
}

const OPEN: &str = "<decision>";
const CLOSE: &str = "</decision>";

/// Byte range of the last delimited decision block body plus the offset
/// where the search for its `obs`/`plan` sections begins.
fn last_block(text: &str) -> Option<(usize, usize, usize)> {
    let mut search_end = text.len();
    while let Some(open) = text[..search_end].rfind(OPEN) {
        let body_start = open + OPEN.len();
        if let Some(rel) = text[body_start..].find(CLOSE) {
            let body_end = body_start + rel;
            let prefix_start = text[..open].rfind(CLOSE).map_or(0, |i| i + CLOSE.len());
            return Some((prefix_start, body_start, body_end));
        }
        search_end = open;
    }
    None
}

fn last_section(text: &str, tag: &str) -> String {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut search_end = text.len();
    while let Some(o) = text[..search_end].rfind(&open) {
        let start = o + open.len();
        if let Some(rel) = text[start..].find(&close) {
            return unescape(&text[start..start + rel]);
        }
        search_end = o;
    }
    String::new()
}

fn parse_coord(s: &str, whole: &str) -> Result<f64, DecisionError> {
    let t = s.trim();
    let numeric = !t.is_empty()
        && t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    match t.parse::<f64>() {
        Ok(v) if numeric && v.is_finite() => Ok(v),
        _ => Err(DecisionError::MalformedPoint(whole.to_string())),
    }
}

fn parse_point(body: &str) -> Result<Pixel, DecisionError> {
    let t = body.trim();
    let inner = t
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| DecisionError::MalformedPoint(t.to_string()))?;
    let (a, b) = inner
        .split_once(',')
        .ok_or_else(|| DecisionError::MalformedPoint(t.to_string()))?;
    Ok(Pixel::new(parse_coord(a, t)?, parse_coord(b, t)?))
}

/// Extracts the body of `<tag>...</tag>` at the start of `rest`.
fn take_tag<'a>(rest: &'a str, tag: &str) -> Option<Result<(&'a str, &'a str), DecisionError>> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let after = rest.strip_prefix(open.as_str())?;
    Some(match after.find(&close) {
        Some(end) => Ok((&after[..end], &after[end + close.len()..])),
        None => Err(DecisionError::MalformedDecision(format!("unterminated <{tag}>"))),
    })
}

pub fn parse_decision(text: &str, platform: Platform) -> Result<Decision, DecisionError> {
    let (prefix_start, body_start, body_end) =
        last_block(text).ok_or(DecisionError::NoDecisionBlock)?;
    let prefix = &text[prefix_start..body_start - OPEN.len()];
    let mut rest = &text[body_start..body_end];

    let mut keypoints = Vec::new();
    let mut skill = None;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        if skill.is_some() {
            return Err(DecisionError::MalformedDecision(
                "content after <skill>".into(),
            ));
        }
        if let Some(tag) = take_tag(rest, "point") {
            let (body, tail) = tag?;
            keypoints.push(parse_point(body)?);
            rest = tail;
        } else if let Some(tag) = take_tag(rest, "skill") {
            let (body, tail) = tag?;
            skill = Some(validate_skill(body.trim(), platform)?);
            rest = tail;
        } else {
            let snippet: String = rest.chars().take(24).collect();
            return Err(DecisionError::MalformedDecision(format!(
                "unexpected token near '{snippet}'"
            )));
        }
    }
    let skill = skill.ok_or_else(|| DecisionError::MalformedDecision("missing <skill>".into()))?;
    Ok(Decision {
        observation: last_section(prefix, "obs"),
        plan: last_section(prefix, "plan"),
        keypoints,
        skill,
        raw_text: text.to_string(),
    })
}

/// Rewrites model-specific output into the normative grammar before parsing.
pub trait Normalizer: Send + Sync {
    fn normalize(&self, text: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityNormalizer;

impl Normalizer for IdentityNormalizer {
    fn normalize(&self, text: &str) -> String {
        text.to_string()
    }
}

/// Accepts `<point>[u, v]</point>` and bare `<point>u, v</point>` forms
/// common in grounding-model output.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointFormNormalizer;

impl Normalizer for PointFormNormalizer {
    fn normalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(i) = rest.find("<point>") {
            let (head, tail) = rest.split_at(i + "<point>".len());
            out.push_str(head);
            match tail.find("</point>") {
                Some(end) => {
                    let body = tail[..end].trim();
                    let inner = body
                        .strip_prefix('[')
                        .and_then(|b| b.strip_suffix(']'))
                        .or_else(|| body.strip_prefix('(').and_then(|b| b.strip_suffix(')')))
                        .unwrap_or(body);
                    out.push('(');
                    out.push_str(inner.trim());
                    out.push(')');
                    rest = &tail[end..];
                }
                None => {
                    rest = tail;
                }
            }
        }
        out.push_str(rest);
        out
    }
}
