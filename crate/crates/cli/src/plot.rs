//! Top-down trajectory plots from episode traces.

use keyloop_core::adapter::TakeoverCause;
use keyloop_core::trace::{Trace, TraceRecord};
use std::fmt::Write as _;

struct Track {
    label: String,
    path: Vec<[f64; 2]>,
    keypoints: Vec<[f64; 2]>,
    takeovers: Vec<([f64; 2], TakeoverCause)>,
}

fn extract(trace: &Trace) -> Track {
    let label = match trace.records.first() {
        Some(TraceRecord::Header { task, seed, .. }) => format!("{} seed {}", task.name(), seed),
        _ => "episode".into(),
    };
    let mut t = Track {
        label,
        path: vec![],
        keypoints: vec![],
        takeovers: vec![],
    };
    let mut last = None;
    for r in &trace.records {
        match r {
            TraceRecord::Tick { pose, .. } => {
                let p = [pose[0], pose[1]];
                t.path.push(p);
                last = Some(p);
            }
            TraceRecord::Decision { targets, .. } => t.keypoints.extend(targets.iter().map(|p| [p.x, p.y])),
            TraceRecord::Event { cause, .. } => {
                if let Some(p) = last {
                    t.takeovers.push((p, *cause));
                }
            }
            _ => {}
        }
    }
    t
}

fn bounds(tracks: &[Track]) -> [f64; 4] {
    let mut b = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
    for p in tracks
        .iter()
        .flat_map(|t| t.path.iter().chain(&t.keypoints).chain(t.takeovers.iter().map(|(p, _)| p)))
    {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    if b[0] > b[2] {
        return [-1.0, -1.0, 1.0, 1.0];
    }
    let pad = 0.05 * (b[2] - b[0]).max(b[3] - b[1]).max(0.2);
    [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad]
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One polyline per trace, with keypoint targets as crosses and takeovers
/// as circles (red for lost keypoints).
pub fn svg(traces: &[Trace]) -> String {
    let tracks: Vec<Track> = traces.iter().map(extract).collect();
    let [x0, y0, x1, y1] = bounds(&tracks);
    let size = 600.0;
    let scale = size / (x1 - x0).max(y1 - y0);
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    // world y up, svg y down
    let px = |p: &[f64; 2]| ((p[0] - x0) * scale, (y1 - p[1]) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, t) in tracks.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t
            .path
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            t.label
        );
        for k in &t.keypoints {
            let (x, y) = px(k);
            let _ = writeln!(
                s,
                r#"<path d="M{:.2} {:.2} l8 8 M{:.2} {:.2} l8 -8" stroke="{c}" stroke-width="1.5"/>"#,
                x - 4.0,
                y - 4.0,
                x - 4.0,
                y + 4.0
            );
        }
        for (p, cause) in &t.takeovers {
            let (x, y) = px(p);
            let stroke = if *cause == TakeoverCause::KeypointsLost { "#d62728" } else { "#555555" };
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Coarse character plot of the first trace: `.` path, `+` keypoint
/// targets, `o` takeovers, `S` start, `E` end.
pub fn ascii(trace: &Trace, cols: usize, rows: usize) -> String {
    let t = extract(trace);
    let [x0, y0, x1, y1] = bounds(std::slice::from_ref(&t));
    let mut grid = vec![vec![' '; cols]; rows];
    let mut put = |p: &[f64; 2], ch: char| {
        let c = (((p[0] - x0) / (x1 - x0)) * (cols - 1) as f64).round() as usize;
        let r = (((y1 - p[1]) / (y1 - y0)) * (rows - 1) as f64).round() as usize;
        grid[r.min(rows - 1)][c.min(cols - 1)] = ch;
    };
    for p in &t.path {
        put(p, '.');
    }
    for k in &t.keypoints {
        put(k, '+');
    }
    for (p, _) in &t.takeovers {
        put(p, 'o');
    }
    if let (Some(a), Some(b)) = (t.path.first(), t.path.last()) {
        put(a, 'S');
        put(b, 'E');
    }
    let mut out = String::new();
    for row in grid {
        out.push_str(row.iter().collect::<String>().trim_end());
        out.push('\n');
    }
    out
}
