//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use keyloop_core::benchmark::{results_csv, run_battery, BatteryOptions, BatteryReport};
use keyloop_core::config::{BrainKind, Config};
use keyloop_core::decision::{parse_decision, serialize_decision};
use keyloop_core::episode::{build_brain, run_episode, EpisodeSpec};
use keyloop_core::geometry::*;
use keyloop_core::task::TaskId;
use keyloop_core::trace::replay;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Draws `n` values from `strategy` with a fixed seed and counts those
/// failing `check`.
fn count_failures<S: Strategy>(strategy: S, n: usize, mut check: impl FnMut(S::Value) -> bool) -> usize {
    let mut runner = TestRunner::new_with_rng(
        RunnerConfig::default(),
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    (0..n)
        .filter(|_| !check(strategy.new_tree(&mut runner).unwrap().current()))
        .count()
}

fn geometry() -> Verdict {
    let t0 = Instant::now();
    let round_trip = count_failures((common::camera(), 0.0..1.0f64, 0.0..1.0f64, 0.05..50.0f64), 1000, |(cam, fu, fv, depth)| {
        let p = Pixel::new(fu * (cam.width as f64 - 1.0), fv * (cam.height as f64 - 1.0));
        let q = project(&unproject(&p, depth, &cam).unwrap(), &cam).unwrap();
        (q.u - p.u).abs() < 1e-9 && (q.v - p.v).abs() < 1e-9
    });
    let commands = (-20.0..20.0f64, -20.0..20.0f64, 0.05..3.0f64, 0.1..3.0f64, 0.1..1.5f64);
    let heading = count_failures(commands, 1000, |(x, y, gain, v_max, yaw_max)| {
        let limits = ControlLimits { gain, v_max, yaw_max, eps_v: 1e-6 };
        let c = velocity_command(&Point3::new(x, y, 0.0), &limits).unwrap();
        c.vx.abs() <= 1e-6 || (c.vyaw.tan() - c.vy / c.vx).abs() < 1e-9
    });
    let cam = common::table_camera();
    let depth = DepthImage::filled(160, 120, 1.0);
    let pairs = (0.0..159.0f64, 0.0..119.0f64, 0.0..159.0f64, 0.0..119.0f64);
    let swap = count_failures(pairs, 1000, |(u1, v1, u2, v2)| {
        let (a, b) = (Pixel::new(u1, v1), Pixel::new(u2, v2));
        let x = grasp_from_antipodal(&a, &b, &depth, &cam, GripMode::Grasp, 3);
        let y = grasp_from_antipodal(&b, &a, &depth, &cam, GripMode::Grasp, 3);
        match (x, y) {
            (Ok(x), Ok(y)) => x == y && (0.0..std::f64::consts::PI).contains(&x.yaw),
            (Err(_), Err(_)) => true,
            _ => false,
        }
    });
    let dt = t0.elapsed();
    verdict(
        round_trip + heading + swap == 0 && dt < Duration::from_secs(1),
        format!("failures: round trip {round_trip}, heading {heading}, swap {swap}; {dt:.2?}"),
    )
}

fn tracker() -> Verdict {
    let t0 = Instant::now();
    let r = common::oracle_tracker_exactness(100, 8, 12, 2024);
    let t_oracle = t0.elapsed();
    let bad_shifts = common::patch_shift_failures(16);
    let dt = t0.elapsed();
    verdict(
        r.compared > 0 && r.worst_error < 1e-6 && r.mismatched_rounding == 0 && bad_shifts.is_empty() && dt < Duration::from_secs(10),
        format!(
            "{} visible samples, worst {:.1e} px, {} rounding mismatches ({t_oracle:.2?}); {} of 1089 shifts missed; {dt:.2?} total",
            r.compared,
            r.worst_error,
            r.mismatched_rounding,
            bad_shifts.len()
        ),
    )
}

fn takeover() -> Verdict {
    let ticks: Vec<_> = [1u32, 5, 10].iter().map(|k| (*k, common::occlusion_takeover_tick(*k))).collect();
    let exact = ticks.iter().all(|(k, t)| *t == Some(*k as u64));
    let mut config = Config::default();
    config.brain.kind = BrainKind::Noisy;
    config.brain.p_wrong_skill = 0.2;
    config.tracker.p_drop = 0.3;
    config.adapter.t_max = 300;
    let mut transitions = 0;
    let mut problems = vec![];
    for i in 0..100u64 {
        let task = TaskId::ALL[i as usize % TaskId::ALL.len()];
        let spec = EpisodeSpec::generated(task, 1000 + i, (i / 14) as usize);
        let mut brain = build_brain(&config.brain, spec.seed).unwrap();
        let run = run_episode(&spec, brain.as_mut(), &config, "noisy");
        match common::check_transition_pairing(&run.trace) {
            Ok(n) => transitions += n,
            Err(e) => problems.push(format!("{} seed {}: {e}", task.name(), spec.seed)),
        }
    }
    verdict(
        exact && problems.is_empty() && transitions > 0,
        format!("event ticks {ticks:?}; {transitions} transitions paired; problems {problems:?}"),
    )
}

fn battery(kind: BrainKind, trials: Option<usize>) -> (BatteryReport, Duration) {
    let mut config = Config::default();
    config.brain.kind = kind;
    config.benchmark.trials = trials;
    if kind == BrainKind::Noisy {
        config.tracker.p_drop = 0.1;
    }
    let t0 = Instant::now();
    let report = run_battery(&TaskId::ALL, &config, 0, &BatteryOptions::default()).expect("battery runs");
    (report, t0.elapsed())
}

fn oracle_battery(report: &BatteryReport, dt: Duration) -> Verdict {
    let short: Vec<String> = report
        .tasks
        .iter()
        .filter(|t| t.rate < 100.0 || t.trials != t.task.trial_count())
        .map(|t| format!("{} {}/{}", t.task.name(), t.successes, t.trials))
        .collect();
    verdict(
        report.tasks.len() == 14 && short.is_empty() && dt < Duration::from_secs(300),
        format!("{} trials, all 14 tasks at 100%: {}; {dt:.1?}", report.results.len(), short.is_empty()),
    )
}

fn robustness(oracle: &BatteryReport, noisy: &BatteryReport) -> Verdict {
    let worse: Vec<String> = TaskId::ALL
        .iter()
        .filter(|t| noisy.rate(**t) > oracle.rate(**t))
        .map(|t| t.name().to_string())
        .collect();
    let cf: Vec<_> = noisy.results.iter().filter(|r| r.task == TaskId::ComplexFind).collect();
    let lost = cf.iter().filter(|r| r.lost_takeovers > 0).count();
    let rates: Vec<String> = noisy.tasks.iter().map(|t| format!("{} {:.0}", t.task.name(), t.rate)).collect();
    verdict(
        worse.is_empty() && !cf.is_empty() && 2 * lost >= cf.len(),
        format!(
            "noisy above oracle on {worse:?}; complex_find lost in {lost}/{}; noisy rates [{}]",
            cf.len(),
            rates.join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.brain.kind = BrainKind::Noisy;
    config.tracker.p_drop = 0.1;
    config.benchmark.trials = Some(3);
    let opts = BatteryOptions {
        trace_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let a = run_battery(&TaskId::ALL, &config, 77, &opts).unwrap();
    let b = run_battery(&TaskId::ALL, &config, 77, &BatteryOptions::default()).unwrap();
    let same_csv = results_csv(&a).unwrap() == results_csv(&b).unwrap();
    let mut diverged = vec![];
    for r in &a.results {
        let text = std::fs::read_to_string(r.trace_path.as_ref().unwrap()).unwrap();
        match replay(&text) {
            Ok(rep) if rep.success == r.success => {}
            Ok(_) => diverged.push(format!("{} seed {}: success bit differs", r.task.name(), r.seed)),
            Err(e) => diverged.push(format!("{} seed {}: {e}", r.task.name(), r.seed)),
        }
    }
    verdict(
        same_csv && diverged.is_empty(),
        format!("identical csv: {same_csv}; {} traces replayed, divergent {diverged:?}", a.results.len()),
    )
}

fn codec() -> Verdict {
    let t0 = Instant::now();
    let round_trip = count_failures(common::decision(), 1000, |d| {
        let text = serialize_decision(&d).unwrap();
        parse_decision(&text, d.skill.platform).is_ok_and(|back| back == d)
    });
    let fuzzed = std::panic::catch_unwind(|| common::fuzz_parser(1_000_000, 99)).unwrap_or(0);
    verdict(
        round_trip == 0 && fuzzed == 1_000_000,
        format!("{round_trip} round-trip failures; {fuzzed} fuzz inputs survived; {:.1?}", t0.elapsed()),
    )
}

fn throughput() -> Verdict {
    let (worst, mean) = common::control_tick_timing(150);
    verdict(
        worst < Duration::from_millis(66),
        format!("worst {worst:.2?}, mean {mean:.2?} per control tick"),
    )
}

fn main() {
    let mut all = true;
    let mut report = |n: u32, name: &str, v: Verdict| {
        all &= v.pass;
        println!("criterion {n} {name:<14} {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    report(1, "geometry", geometry());
    report(2, "tracker", tracker());
    report(3, "takeover", takeover());
    let (oracle, dt) = battery(BrainKind::Oracle, None);
    report(4, "oracle", oracle_battery(&oracle, dt));
    let (noisy, _) = battery(BrainKind::Noisy, None);
    report(5, "robustness", robustness(&oracle, &noisy));
    report(6, "determinism", determinism());
    report(7, "codec", codec());
    report(8, "throughput", throughput());
    if !all {
        std::process::exit(1);
    }
}
