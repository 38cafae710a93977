use keyloop_core::benchmark::*;
use keyloop_core::config::{BrainKind, Config};
use keyloop_core::task::{Gesture, TaskId};
use keyloop_core::trace::replay;
use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;

fn noisy(trials: usize, workers: usize) -> Config {
    let mut c = Config::default();
    c.brain.kind = BrainKind::Noisy;
    c.tracker.p_drop = 0.1;
    c.benchmark.trials = Some(trials);
    c.benchmark.workers = workers;
    c
}

const SMALL: [TaskId; 3] = [TaskId::Find, TaskId::Transport, TaskId::BananaIn];

#[test]
fn aggregation_ignores_worker_count() {
    let a = run_battery(&SMALL, &noisy(2, 1), 40, &BatteryOptions::default()).unwrap();
    let b = run_battery(&SMALL, &noisy(2, 3), 40, &BatteryOptions::default()).unwrap();
    assert_eq!(results_csv(&a).unwrap(), results_csv(&b).unwrap());
    assert_eq!((a.results, a.tasks), (b.results, b.tasks));
}

#[test]
fn every_trial_trace_replays_to_its_result() {
    let dir = tempfile::tempdir().unwrap();
    let opts = BatteryOptions {
        trace_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let report = run_battery(&SMALL, &noisy(2, 2), 7, &opts).unwrap();
    assert_eq!(report.results.len(), 6);
    for r in &report.results {
        let text = std::fs::read_to_string(r.trace_path.as_ref().unwrap()).unwrap();
        let rep = replay(&text).unwrap();
        assert_eq!(rep.success, r.success);
        assert_eq!(rep.ticks, r.ticks);
        if r.success {
            assert!(r.cause.is_none());
        }
    }
}

#[test]
fn reports_are_written_with_thresholds_and_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_battery(&[TaskId::Find, TaskId::CarrotOut], &noisy(1, 1), 0, &BatteryOptions::default()).unwrap();
    write_reports(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("task,seed,success,cause,ticks,takeovers"));
    assert_eq!(csv.lines().count(), 3);
    let json: BatteryReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json, report);
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    for needle in ["0.5 m", "3 s", "0.95", "86.4", "74.3", "| find |", "| carrot_out |"] {
        assert!(md.contains(needle), "report lacks {needle}:\n{md}");
    }
}

#[test]
fn cancelled_battery_runs_nothing() {
    let stop = AtomicBool::new(true);
    let opts = BatteryOptions {
        cancel: Some(&stop),
        ..Default::default()
    };
    let report = run_battery(&SMALL, &noisy(3, 1), 0, &opts).unwrap();
    assert!(report.results.is_empty());
}

#[test]
fn floors_gate_low_rates() {
    let mut config = noisy(1, 1);
    config.brain.kind = BrainKind::Oracle;
    config.benchmark.floors = BTreeMap::from([("find".to_string(), 0.9), ("banana_in".to_string(), 1.0)]);
    let report = run_battery(&[TaskId::Find], &config, 0, &BatteryOptions::default()).unwrap();
    assert!(floor_violations(&report).is_empty());
    let mut worse = report.clone();
    worse.tasks[0].rate = 50.0;
    assert_eq!(floor_violations(&worse), vec![(TaskId::Find, 0.5, 0.9)]);
}

#[test]
fn default_trial_counts() {
    let th = Config::default().benchmark;
    for t in TaskId::ALL {
        let n = trial_count(t, &th);
        if t.is_interaction() {
            assert_eq!(n, 20);
            for g in Gesture::REQUESTS {
                assert_eq!((0..n).filter(|i| t.gesture_for_trial(*i) == g).count(), 5, "{g:?}");
            }
        } else {
            assert_eq!(n, 10);
        }
    }
}
