mod plot;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use keyloop_core::benchmark::{floor_violations, run_battery, write_reports, BatteryOptions, TrialResult};
use keyloop_core::config::{BrainKind, Config};
use keyloop_core::episode::{brain_label, build_brain, run_episode, EpisodeSpec};
use keyloop_core::sim::Scene;
use keyloop_core::task::TaskId;
use keyloop_core::trace::{replay, ReplayError};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

/// Keypoint-driven closed-loop control: benchmark batteries, single
/// episodes and trace replay against the built-in simulator.
#[derive(Parser, Debug)]
#[command(name = "keyloop", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run seeded trial batteries and write results.csv, results.json and report.md
    Bench(BenchArgs),
    /// Run a single episode and write its trace
    Episode(EpisodeArgs),
    /// Re-run a trace and check every recorded state hash
    Replay(ReplayArgs),
    /// Check a config file and print the effective configuration
    ValidateConfig(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BrainArg {
    Oracle,
    Noisy,
    Remote,
}

impl From<BrainArg> for BrainKind {
    fn from(b: BrainArg) -> Self {
        match b {
            BrainArg::Oracle => BrainKind::Oracle,
            BrainArg::Noisy => BrainKind::Noisy,
            BrainArg::Remote => BrainKind::Remote,
        }
    }
}

#[derive(Args, Debug)]
struct Overrides {
    /// JSON config file; flags below override its values
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Decision source
    #[arg(long, value_enum)]
    brain: Option<BrainArg>,
    /// Model server endpoint for the remote brain
    #[arg(long, env = "BRAIN_URL")]
    brain_url: Option<String>,
    /// Remote brain request timeout in seconds
    #[arg(long, env = "BRAIN_TIMEOUT_S")]
    brain_timeout_s: Option<f64>,
    /// Base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Tracker pixel noise (oracle tracker)
    #[arg(long)]
    tracker_sigma: Option<f64>,
    /// Tracker per-frame dropout probability (oracle tracker)
    #[arg(long)]
    tracker_drop: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated task ids, or `legged`, `arm`, `all`
    #[arg(long, default_value = "all")]
    tasks: String,
    /// Trials per task instead of the standard count
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for reports
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Also write one NDJSON trace per trial under <out>/traces
    #[arg(long)]
    traces: bool,
}

#[derive(Args, Debug)]
struct EpisodeArgs {
    #[command(flatten)]
    common: Overrides,
    /// Task id
    #[arg(long)]
    task: String,
    /// Trial index (selects the gesture in interaction tasks)
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Hand-authored scene JSON instead of the generated layout
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Where to write the NDJSON trace
    #[arg(long, default_value = "episode.ndjson")]
    trace: PathBuf,
    /// Write initial and final camera frames (PPM colour, PGM depth) here
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Write a trajectory SVG
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Trace files to replay
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Write a trajectory SVG with one polyline per trace
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Print a character plot of each trajectory
    #[arg(long)]
    ascii: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Config file to check
    path: PathBuf,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn load_config(o: &Overrides) -> Result<Config, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::usage)?;
            Config::from_json(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(Failure::usage)?
        }
        None => Config::default(),
    };
    if let Some(b) = o.brain {
        cfg.brain.kind = b.into();
    }
    if let Some(u) = &o.brain_url {
        cfg.brain.url = Some(u.clone());
    }
    if let Some(t) = o.brain_timeout_s {
        cfg.brain.timeout_s = t;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(s) = o.tracker_sigma {
        cfg.tracker.sigma_px = s;
    }
    if let Some(p) = o.tracker_drop {
        cfg.tracker.p_drop = p;
    }
    cfg.validate().map_err(|e| Failure::usage(e.into()))?;
    Ok(cfg)
}

fn valid_ids() -> String {
    TaskId::ALL.iter().map(|t| t.name()).collect::<Vec<_>>().join(", ")
}

fn parse_task(name: &str) -> Result<TaskId, Failure> {
    TaskId::from_name(name.trim())
        .ok_or_else(|| Failure::usage(anyhow!("unknown task {name:?}; valid ids: {}", valid_ids())))
}

fn parse_tasks(spec: &str) -> Result<Vec<TaskId>, Failure> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let group: Vec<TaskId> = match part {
            "all" => TaskId::ALL.to_vec(),
            "legged" | "arm" => TaskId::ALL
                .iter()
                .copied()
                .filter(|t| t.platform().to_string() == part)
                .collect(),
            name => vec![parse_task(name)?],
        };
        for t in group {
            if !out.contains(&t) {
                out.push(t);
            }
        }
    }
    if out.is_empty() {
        return Err(Failure::usage(anyhow!("no tasks selected; valid ids: {}", valid_ids())));
    }
    Ok(out)
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let mut cfg = load_config(&a.common)?;
    let tasks = parse_tasks(&a.tasks)?;
    if let Some(n) = a.trials {
        cfg.benchmark.trials = Some(n);
    }
    if let Some(w) = a.workers {
        cfg.benchmark.workers = w;
    }
    cfg.validate().map_err(|e| Failure::usage(e.into()))?;
    if let Err(e) = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst)) {
        log::warn!("no Ctrl-C handler: {e}");
    }

    let total: usize = tasks
        .iter()
        .map(|t| keyloop_core::benchmark::trial_count(*t, &cfg.benchmark))
        .sum();
    let done = AtomicUsize::new(0);
    let progress = |r: &TrialResult| {
        let n = done.fetch_add(1, Ordering::SeqCst) + 1;
        eprintln!(
            "[{n}/{total}] {} trial {} seed {}: {} ({} ticks, {} takeovers)",
            r.task.name(),
            r.trial,
            r.seed,
            r.cause.as_deref().unwrap_or("success"),
            r.ticks,
            r.takeovers
        );
    };
    let opts = BatteryOptions {
        trace_dir: a.traces.then(|| a.out.join("traces")),
        cancel: Some(&INTERRUPTED),
        progress: Some(&progress),
    };
    let report = run_battery(&tasks, &cfg, cfg.seed, &opts).context("running battery")?;
    write_reports(&report, &a.out).context("writing reports")?;
    for t in &report.tasks {
        println!("{:<22} {:>3}/{:<3} {:>6.1}%", t.task.name(), t.successes, t.trials, t.rate);
    }
    if let Some(o) = report.legged_overall {
        println!("{:<22} {:>14.1}%", "legged overall", o);
    }
    if let Some(o) = report.arm_overall {
        println!("{:<22} {:>14.1}%", "arm overall", o);
    }
    println!("reports written to {}", a.out.display());
    if INTERRUPTED.load(Ordering::SeqCst) {
        eprintln!("interrupted: partial reports written");
        return Ok(ExitCode::from(130));
    }
    let violations = floor_violations(&report);
    for (task, rate, floor) in &violations {
        eprintln!("floor not met: {} rate {:.3} < {:.3}", task.name(), rate, floor);
    }
    Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn write_frames(scene: &Scene, cfg: &Config, dir: &Path, tag: &str, frame_id: u64) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let obs = scene.render(frame_id, &cfg.sim);
    let rgb = dir.join(format!("{tag}.ppm"));
    obs.write_ppm(BufWriter::new(std::fs::File::create(&rgb)?))?;
    let depth = dir.join(format!("{tag}_depth.pgm"));
    obs.write_depth_pgm(BufWriter::new(std::fs::File::create(&depth)?))?;
    Ok(())
}

fn cmd_episode(a: EpisodeArgs) -> CmdResult {
    let cfg = load_config(&a.common)?;
    let task = parse_task(&a.task)?;
    let mut spec = EpisodeSpec::generated(task, cfg.seed, a.trial);
    if let Some(path) = &a.scene {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::usage)?;
        let scene = Scene::from_json(&text)
            .with_context(|| format!("in {}", path.display()))
            .map_err(Failure::usage)?;
        if scene.platform() != task.platform() {
            return Err(Failure::usage(anyhow!("scene is for the {} platform, task {} is not", scene.platform(), task.name())));
        }
        spec.scene = scene;
    }
    let mut brain = build_brain(&cfg.brain, spec.seed).map_err(|e| Failure::usage(e.into()))?;
    let run = run_episode(&spec, brain.as_mut(), &cfg, &brain_label(&cfg.brain));
    std::fs::write(&a.trace, run.trace.to_ndjson()).with_context(|| format!("writing {}", a.trace.display()))?;
    if let Some(dir) = &a.frames {
        write_frames(&spec.scene, &cfg, dir, "initial", 0)?;
        write_frames(&run.final_scene, &cfg, dir, "final", run.outcome.ticks)?;
    }
    if let Some(p) = &a.plot {
        std::fs::write(p, plot::svg(std::slice::from_ref(&run.trace))).with_context(|| format!("writing {}", p.display()))?;
    }
    let o = &run.outcome;
    println!(
        "{} seed {}: {} after {} ticks, {} takeovers ({} lost), {} queries",
        task.name(),
        spec.seed,
        o.cause.map_or("success", |c| c.name()),
        o.ticks,
        o.takeovers,
        o.lost_takeovers,
        o.queries
    );
    println!("trace written to {}", a.trace.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(a: ReplayArgs) -> CmdResult {
    let mut traces = Vec::new();
    for path in &a.traces {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::usage)?;
        match replay(&text) {
            Ok(r) => {
                println!(
                    "{}: {} records, {} ticks, success={}, no divergence",
                    path.display(),
                    r.records,
                    r.ticks,
                    r.success
                );
                if a.ascii {
                    print!("{}", plot::ascii(&r.trace, 72, 24));
                }
                traces.push(r.trace);
            }
            Err(e @ ReplayError::BadHeader(_)) => {
                return Err(Failure::usage(anyhow!("{}: {e}", path.display())));
            }
            Err(e) => {
                return Err(Failure {
                    code: 3,
                    error: anyhow!("{}: {e}", path.display()),
                })
            }
        }
    }
    if let Some(p) = &a.plot {
        std::fs::write(p, plot::svg(&traces)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.path)
        .with_context(|| format!("reading {}", a.path.display()))
        .map_err(Failure::usage)?;
    let cfg = Config::from_json(&text)
        .with_context(|| format!("in {}", a.path.display()))
        .map_err(Failure::usage)?;
    println!("{}", cfg.to_json());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Episode(a) => cmd_episode(a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::ValidateConfig(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

