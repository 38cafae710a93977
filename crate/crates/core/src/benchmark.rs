//! Task success predicates, seeded trial batteries and report writers.

use crate::config::{BenchmarkConfig, Config};
use crate::decision::{Platform, Skill};
use crate::episode::{brain_label, build_brain, run_episode, EpisodeSpec};
use crate::sim::{ArmPlace, ArmWorld, Gripper, LeggedWorld, Place, Scene};
use crate::task::{Difficulty, TaskId};
use crate::trace::{Trace, TraceRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Published real-robot success rates, per task in `TaskId::ALL` order.
/// Reprinted in reports for context only.
pub const REFERENCE_RATES: [(TaskId, f64); 14] = [
    (TaskId::Find, 100.0),
    (TaskId::Track, 100.0),
    (TaskId::Interaction, 90.0),
    (TaskId::ComplexFind, 80.0),
    (TaskId::ComplexInteraction, 85.0),
    (TaskId::Transport, 90.0),
    (TaskId::ComplexTransport, 60.0),
    (TaskId::BananaIn, 70.0),
    (TaskId::PepperIn, 70.0),
    (TaskId::CarrotOut, 90.0),
    (TaskId::KiwifruitOut, 60.0),
    (TaskId::OpenDrawer, 90.0),
    (TaskId::LhCarrot, 60.0),
    (TaskId::LhPepper, 80.0),
];
pub const REFERENCE_LEGGED_OVERALL: f64 = 86.4;
pub const REFERENCE_ARM_OVERALL: f64 = 74.3;

fn legged_state_ok(task: TaskId, w: &LeggedWorld, th: &BenchmarkConfig) -> bool {
    if w.collided {
        return false;
    }
    let dist = w.target_distance();
    match task {
        TaskId::Find | TaskId::ComplexFind => dist.is_some_and(|d| d <= th.reach_radius),
        TaskId::Track => dist.is_some_and(|d| d <= th.track_radius),
        TaskId::Interaction | TaskId::ComplexInteraction => {
            let Some(h) = w.humans.iter().find(|h| Some(h.id) == w.target) else {
                return false;
            };
            let wanted = h.gesture.response();
            dist.is_some_and(|d| d < th.interaction_radius) && (wanted == Skill::Walk || w.posture == Some(wanted))
        }
        TaskId::Transport | TaskId::ComplexTransport => {
            let Some(bin) = w.target else { return false };
            let cargo: Vec<_> = w.objects.iter().filter(|o| o.id != bin).collect();
            w.basket_load.is_empty() && !cargo.is_empty() && cargo.iter().all(|o| o.place == Place::Bin(bin))
        }
        _ => false,
    }
}

fn arm_state_ok(task: TaskId, w: &ArmWorld, th: &BenchmarkConfig) -> bool {
    let open = w.gripper == Gripper::Open && w.held.is_none();
    let item = w.target.and_then(|id| w.item(id));
    let drawer_open = w.drawer.is_some_and(|d| d.fraction >= th.drawer_open);
    match task {
        TaskId::BananaIn | TaskId::PepperIn => {
            open && matches!((item, w.container), (Some(i), Some(b)) if b.contains(&i.center))
        }
        TaskId::CarrotOut | TaskId::KiwifruitOut => {
            open && matches!((item, w.container), (Some(i), Some(b)) if !b.contains(&i.center) && i.place != ArmPlace::Gripper)
        }
        TaskId::OpenDrawer => drawer_open,
        TaskId::LhCarrot | TaskId::LhPepper => {
            open && drawer_open
                && matches!((item, w.drawer), (Some(i), Some(d)) if !d.contains(&i.center) && i.place != ArmPlace::Gripper)
        }
        _ => false,
    }
}

/// Task predicate on a single world state. For `track` this only checks the
/// distance at that instant; the hold time comes from the trace.
pub fn state_satisfied(task: TaskId, scene: &Scene, th: &BenchmarkConfig) -> bool {
    match scene {
        Scene::Legged(w) => legged_state_ok(task, w, th),
        Scene::Arm(w) => arm_state_ok(task, w, th),
    }
}

pub fn track_hold_ticks(th: &BenchmarkConfig, control_hz: f64) -> u64 {
    (th.track_hold_s * control_hz).ceil() as u64
}

/// Success judged from the final state and the trace.
pub fn success_predicate(task: TaskId, scene: &Scene, trace: &Trace, th: &BenchmarkConfig, control_hz: f64) -> bool {
    if !state_satisfied(task, scene, th) {
        return false;
    }
    let collided = trace.records.iter().any(|r| {
        matches!(r, TraceRecord::End { cause: Some(crate::adapter::FailureReason::Collision), .. })
    });
    if collided {
        return false;
    }
    if task != TaskId::Track {
        return true;
    }
    let need = track_hold_ticks(th, control_hz) as usize;
    let dists: Vec<Option<f64>> = trace
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Tick { target_dist, .. } => Some(*target_dist),
            _ => None,
        })
        .collect();
    dists.len() >= need
        && dists[dists.len() - need..]
            .iter()
            .all(|d| d.is_some_and(|d| d <= th.track_radius))
}

/// Incremental success check used inside the episode loop.
#[derive(Debug, Clone)]
pub struct SuccessMonitor {
    task: TaskId,
    th: BenchmarkConfig,
    need: u64,
    streak: u64,
}

impl SuccessMonitor {
    pub fn new(task: TaskId, th: &BenchmarkConfig, control_hz: f64) -> Self {
        Self {
            task,
            th: th.clone(),
            need: track_hold_ticks(th, control_hz),
            streak: 0,
        }
    }

    /// Call once per simulated tick, after the step.
    pub fn observe(&mut self, scene: &Scene) {
        if self.task == TaskId::Track {
            if state_satisfied(self.task, scene, &self.th) {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
    }

    pub fn satisfied(&self, scene: &Scene) -> bool {
        if self.task == TaskId::Track {
            self.need > 0 && self.streak >= self.need && state_satisfied(self.task, scene, &self.th)
        } else {
            state_satisfied(self.task, scene, &self.th)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task: TaskId,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub cause: Option<String>,
    pub ticks: u64,
    pub takeovers: u32,
    pub lost_takeovers: u32,
    pub trace_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: TaskId,
    pub platform: Platform,
    pub difficulty: Difficulty,
    pub trials: usize,
    pub successes: usize,
    /// Percent.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub brain: String,
    pub base_seed: u64,
    pub thresholds: BenchmarkConfig,
    pub tasks: Vec<TaskSummary>,
    /// Mean of per-task rates, percent.
    pub legged_overall: Option<f64>,
    pub arm_overall: Option<f64>,
    pub results: Vec<TrialResult>,
}

impl BatteryReport {
    pub fn rate(&self, task: TaskId) -> Option<f64> {
        self.tasks.iter().find(|t| t.task == task).map(|t| t.rate)
    }

    pub fn summarise(brain: String, base_seed: u64, thresholds: BenchmarkConfig, mut results: Vec<TrialResult>) -> Self {
        let order = |t: TaskId| TaskId::ALL.iter().position(|x| *x == t).unwrap_or(usize::MAX);
        results.sort_by_key(|r| (order(r.task), r.trial));
        let mut tasks = Vec::new();
        for t in TaskId::ALL {
            let rs: Vec<_> = results.iter().filter(|r| r.task == t).collect();
            if rs.is_empty() {
                continue;
            }
            let successes = rs.iter().filter(|r| r.success).count();
            tasks.push(TaskSummary {
                task: t,
                platform: t.platform(),
                difficulty: t.difficulty(),
                trials: rs.len(),
                successes,
                rate: 100.0 * successes as f64 / rs.len() as f64,
            });
        }
        let overall = |p: Platform| {
            let rates: Vec<f64> = tasks.iter().filter(|s| s.platform == p).map(|s| s.rate).collect();
            (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
        };
        Self {
            brain,
            base_seed,
            legged_overall: overall(Platform::Legged),
            arm_overall: overall(Platform::Arm),
            thresholds,
            tasks,
            results,
        }
    }
}

#[derive(Default)]
pub struct BatteryOptions<'a> {
    /// Writes one NDJSON trace per trial when set.
    pub trace_dir: Option<PathBuf>,
    /// Trials not yet started are skipped once this is set.
    pub cancel: Option<&'a AtomicBool>,
    pub progress: Option<&'a (dyn Fn(&TrialResult) + Sync)>,
}

pub fn trial_count(task: TaskId, th: &BenchmarkConfig) -> usize {
    th.trials.unwrap_or_else(|| task.trial_count())
}

fn trace_file(dir: &Path, task: TaskId, trial: usize, seed: u64) -> PathBuf {
    dir.join(format!("{}_{:02}_{}.ndjson", task.name(), trial, seed))
}

/// One trial, with panics turned into `InternalError` failures.
pub fn run_trial(task: TaskId, trial: usize, seed: u64, config: &Config, trace_dir: Option<&Path>) -> TrialResult {
    let failed = |cause: &str| TrialResult {
        task,
        trial,
        seed,
        success: false,
        cause: Some(cause.to_string()),
        ticks: 0,
        takeovers: 0,
        lost_takeovers: 0,
        trace_path: None,
    };
    let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let mut brain = match build_brain(&config.brain, seed) {
            Ok(b) => b,
            Err(e) => {
                log::error!("{}: {e}", task.name());
                return None;
            }
        };
        let spec = EpisodeSpec::generated(task, seed, trial);
        Some(run_episode(&spec, brain.as_mut(), config, &brain_label(&config.brain)))
    }));
    let run = match run {
        Ok(Some(run)) => run,
        Ok(None) => return failed("BrainUnavailable"),
        Err(_) => return failed("InternalError"),
    };
    let mut trace_path = None;
    if let Some(dir) = trace_dir {
        let path = trace_file(dir, task, trial, seed);
        match std::fs::write(&path, run.trace.to_ndjson()) {
            Ok(()) => trace_path = Some(path.display().to_string()),
            Err(e) => log::error!("writing {}: {e}", path.display()),
        }
    }
    let o = run.outcome;
    TrialResult {
        task,
        trial,
        seed,
        success: o.success,
        cause: o.cause.map(|c| c.name().to_string()),
        ticks: o.ticks,
        takeovers: o.takeovers,
        lost_takeovers: o.lost_takeovers,
        trace_path,
    }
}

/// Runs every trial of `tasks` with seeds `base_seed + i` on a worker pool.
pub fn run_battery(
    tasks: &[TaskId],
    config: &Config,
    base_seed: u64,
    opts: &BatteryOptions,
) -> Result<BatteryReport, BenchmarkError> {
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(TaskId, usize)> = tasks
        .iter()
        .flat_map(|t| (0..trial_count(*t, &config.benchmark)).map(move |i| (*t, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.benchmark.workers)
        .build()
        .map_err(|e| BenchmarkError::Pool(e.to_string()))?;
    let results: Vec<TrialResult> = pool.install(|| {
        jobs.par_iter()
            .filter_map(|(task, i)| {
                if opts.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                    return None;
                }
                let r = run_trial(*task, *i, base_seed + *i as u64, config, opts.trace_dir.as_deref());
                if let Some(p) = opts.progress {
                    p(&r);
                }
                Some(r)
            })
            .collect()
    });
    Ok(BatteryReport::summarise(
        brain_label(&config.brain),
        base_seed,
        config.benchmark.clone(),
        results,
    ))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    task: &'a str,
    seed: u64,
    success: bool,
    cause: &'a str,
    ticks: u64,
    takeovers: u32,
}

pub fn results_csv(report: &BatteryReport) -> Result<String, BenchmarkError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.results {
        w.serialize(CsvRow {
            task: r.task.name(),
            seed: r.seed,
            success: r.success,
            cause: r.cause.as_deref().unwrap_or(""),
            ticks: r.ticks,
            takeovers: r.takeovers,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| BenchmarkError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn reference_rate(task: TaskId) -> f64 {
    REFERENCE_RATES.iter().find(|(t, _)| *t == task).map(|(_, r)| *r).unwrap_or(f64::NAN)
}

fn difficulty_name(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Easy => "easy",
        Difficulty::Middle => "middle",
        Difficulty::Hard => "hard",
    }
}

pub fn report_markdown(report: &BatteryReport) -> String {
    let th = &report.thresholds;
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark report\n");
    let _ = writeln!(s, "Brain: `{}`. Base seed: {}.\n", report.brain, report.base_seed);
    let _ = writeln!(s, "## Success thresholds\n");
    let _ = writeln!(s, "| threshold | value |\n|---|---|");
    let _ = writeln!(s, "| find reach radius | {} m |", th.reach_radius);
    let _ = writeln!(s, "| track radius | {} m |", th.track_radius);
    let _ = writeln!(s, "| track hold | {} s |", th.track_hold_s);
    let _ = writeln!(s, "| interaction radius | {} m |", th.interaction_radius);
    let _ = writeln!(s, "| drawer open fraction | {} |", th.drawer_open);
    for (platform, title, overall, reference) in [
        (Platform::Legged, "Legged robot", report.legged_overall, REFERENCE_LEGGED_OVERALL),
        (Platform::Arm, "Robotic arm", report.arm_overall, REFERENCE_ARM_OVERALL),
    ] {
        let rows: Vec<_> = report.tasks.iter().filter(|t| t.platform == platform).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(s, "\n## {title}\n");
        let _ = writeln!(s, "| task | difficulty | successes | rate (%) | reference (%) |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for t in rows {
            let _ = writeln!(
                s,
                "| {} | {} | {}/{} | {:.1} | {:.1} |",
                t.task.name(),
                difficulty_name(t.difficulty),
                t.successes,
                t.trials,
                t.rate,
                reference_rate(t.task)
            );
        }
        if let Some(o) = overall {
            let _ = writeln!(s, "| **overall** | | | {o:.1} | {reference:.1} |");
        }
    }
    let _ = writeln!(
        s,
        "\nReference columns are published real-robot results with a trained model. \
         They are printed for context and are not reproduced by this harness."
    );
    s
}

/// Writes results.csv, results.json and report.md into `dir`.
pub fn write_reports(report: &BatteryReport, dir: &Path) -> Result<(), BenchmarkError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(report)?)?;
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(dir.join("report.md"), report_markdown(report))?;
    Ok(())
}

/// Tasks whose success rate (0..1 scale) is below its configured floor.
pub fn floor_violations(report: &BatteryReport) -> Vec<(TaskId, f64, f64)> {
    report
        .thresholds
        .floors
        .iter()
        .filter_map(|(name, floor)| {
            let task = TaskId::from_name(name)?;
            let rate = report.rate(task)? / 100.0;
            (rate < *floor).then_some((task, rate, *floor))
        })
        .collect()
}
