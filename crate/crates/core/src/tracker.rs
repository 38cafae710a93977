//! Image-space keypoint tracking with visibility accounting.

use crate::geometry::{project, world_to_camera, Pixel, Point3};
use crate::sim::{occluded, raycast, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("keypoint ({u:.1}, {v:.1}) is outside the image")]
    OutOfBounds { u: f64, v: f64 },
    #[error("frame {got} is not newer than frame {last}")]
    Ordering { last: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    pub id: usize,
    pub pixel: Pixel,
    pub visible: bool,
    pub confidence: f64,
    pub missed_frames: u32,
}

impl TrackedPoint {
    fn seen(&mut self, pixel: Pixel, confidence: f64) {
        self.pixel = pixel;
        self.visible = true;
        self.confidence = confidence.clamp(0.0, 1.0);
        self.missed_frames = 0;
    }

    /// Records one invisible frame.
    pub fn miss(&mut self) {
        self.visible = false;
        self.confidence = 0.0;
        self.missed_frames += 1;
    }
}

/// Per-point memory an implementation keeps between frames.
#[derive(Debug, Clone, PartialEq)]
enum Memory {
    Nothing,
    /// Anchor in the local frame of the primitive the keypoint landed on.
    Anchor { prim: u32, owner: u32, local: Point3 },
    Template(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerState {
    pub points: Vec<TrackedPoint>,
    pub last_frame_id: u64,
    #[serde(skip)]
    memory: Vec<Memory>,
}

impl TrackerState {
    pub fn empty(frame_id: u64) -> Self {
        Self {
            points: vec![],
            last_frame_id: frame_id,
            memory: vec![],
        }
    }

    pub fn point(&self, id: usize) -> Option<&TrackedPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn point_mut(&mut self, id: usize) -> Option<&mut TrackedPoint> {
        self.points.iter_mut().find(|p| p.id == id)
    }

    /// Stops tracking point `id`.
    pub fn retire(&mut self, id: usize) {
        if let Some(i) = self.points.iter().position(|p| p.id == id) {
            self.points.remove(i);
            self.memory.remove(i);
        }
    }

    fn check_order(&self, frame: &Observation) -> Result<(), TrackerError> {
        if frame.frame_id <= self.last_frame_id {
            return Err(TrackerError::Ordering {
                last: self.last_frame_id,
                got: frame.frame_id,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossRule {
    /// Lost once every point has been missing long enough.
    All,
    /// Lost as soon as any point has been missing long enough.
    Any,
}

/// Whether tracking counts as lost after `k` missed frames.
pub fn is_lost(state: &TrackerState, k: u32, rule: LossRule) -> bool {
    let k = k.max(1);
    if state.points.is_empty() {
        return false;
    }
    match rule {
        LossRule::All => state.points.iter().all(|p| p.missed_frames >= k),
        LossRule::Any => state.points.iter().any(|p| p.missed_frames >= k),
    }
}

pub trait PointTracker: Send {
    fn init_tracks(&mut self, frame: &Observation, keypoints: &[Pixel]) -> Result<TrackerState, TrackerError>;
    fn update(&mut self, state: &TrackerState, frame: &Observation) -> Result<TrackerState, TrackerError>;
}

fn fresh_points(frame: &Observation, keypoints: &[Pixel]) -> Result<Vec<TrackedPoint>, TrackerError> {
    keypoints
        .iter()
        .enumerate()
        .map(|(id, p)| {
            if !frame.camera.contains(p) {
                return Err(TrackerError::OutOfBounds { u: p.u, v: p.v });
            }
            Ok(TrackedPoint {
                id,
                pixel: *p,
                visible: true,
                confidence: 1.0,
                missed_frames: 0,
            })
        })
        .collect()
}

/// Privileged tracker: re-projects the surface point under each keypoint.
pub struct OracleTracker {
    sigma: f64,
    p_drop: f64,
    rng: ChaCha8Rng,
}

impl OracleTracker {
    pub fn new(sigma: f64, p_drop: f64, seed: u64) -> Self {
        Self {
            sigma: sigma.max(0.0),
            p_drop: p_drop.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn locate(&self, frame: &Observation, memory: &Memory) -> Option<Pixel> {
        let Memory::Anchor { prim, owner, local } = memory else {
            return None;
        };
        let p = frame.truth.iter().find(|p| p.id == *prim)?;
        let world = p.to_world(local);
        let pixel = project(&world_to_camera(&world, &frame.camera), &frame.camera).ok()?;
        if !frame.camera.contains(&pixel) {
            return None;
        }
        let eye = frame.camera.world_position();
        if occluded(&frame.truth, &eye, &world, Some(*owner), 0.01) {
            return None;
        }
        Some(pixel)
    }
}

impl PointTracker for OracleTracker {
    fn init_tracks(&mut self, frame: &Observation, keypoints: &[Pixel]) -> Result<TrackerState, TrackerError> {
        let points = fresh_points(frame, keypoints)?;
        let origin = frame.camera.extrinsics.translation;
        let memory = keypoints
            .iter()
            .map(|p| {
                let dir = frame.camera.extrinsics.apply_vector(&frame.camera.ray_direction(p));
                match raycast(&frame.truth, &origin, &dir, None) {
                    Some((t, prim)) => Memory::Anchor {
                        prim: prim.id,
                        owner: prim.owner,
                        local: prim.to_local(&Point3::from_vector(origin + dir * t)),
                    },
                    None => Memory::Nothing,
                }
            })
            .collect();
        Ok(TrackerState {
            points,
            last_frame_id: frame.frame_id,
            memory,
        })
    }

    fn update(&mut self, state: &TrackerState, frame: &Observation) -> Result<TrackerState, TrackerError> {
        state.check_order(frame)?;
        let mut next = state.clone();
        next.last_frame_id = frame.frame_id;
        let noise = Normal::new(0.0, self.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        for (pt, mem) in next.points.iter_mut().zip(&state.memory) {
            // draw every time so the stream does not depend on visibility
            let (nu, nv) = (noise.sample(&mut self.rng), noise.sample(&mut self.rng));
            let dropped = self.rng.gen_bool(self.p_drop);
            match self.locate(frame, mem) {
                Some(px) if !dropped => {
                    let px = if self.sigma > 0.0 { Pixel::new(px.u + nu, px.v + nv) } else { px };
                    pt.seen(px, 1.0);
                }
                _ => pt.miss(),
            }
        }
        Ok(next)
    }
}

/// Normalised cross-correlation template matcher on the grey channel.
pub struct PatchTracker {
    half: i64,
    search: i64,
    threshold: f64,
}

impl PatchTracker {
    /// `size` is the odd template edge length.
    pub fn new(size: usize, search: u32, threshold: f64) -> Self {
        Self {
            half: (size.max(1) / 2) as i64,
            search: search as i64,
            threshold,
        }
    }

    fn patch(&self, frame: &Observation, cx: i64, cy: i64) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(((2 * self.half + 1) * (2 * self.half + 1)) as usize);
        for y in cy - self.half..=cy + self.half {
            for x in cx - self.half..=cx + self.half {
                out.push(frame.gray(x, y)?);
            }
        }
        Some(out)
    }
}

/// Zero-mean normalised cross-correlation; 0 when either side is flat.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-9 || sbb <= 1e-9 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

impl PointTracker for PatchTracker {
    fn init_tracks(&mut self, frame: &Observation, keypoints: &[Pixel]) -> Result<TrackerState, TrackerError> {
        let points = fresh_points(frame, keypoints)?;
        let memory = keypoints
            .iter()
            .map(|p| {
                let (x, y) = p.nearest();
                self.patch(frame, x, y).map_or(Memory::Nothing, Memory::Template)
            })
            .collect();
        Ok(TrackerState {
            points,
            last_frame_id: frame.frame_id,
            memory,
        })
    }

    fn update(&mut self, state: &TrackerState, frame: &Observation) -> Result<TrackerState, TrackerError> {
        state.check_order(frame)?;
        let mut next = state.clone();
        next.last_frame_id = frame.frame_id;
        for (pt, mem) in next.points.iter_mut().zip(next.memory.iter_mut()) {
            let Memory::Template(tpl) = mem else {
                pt.miss();
                continue;
            };
            let (x0, y0) = pt.pixel.nearest();
            let mut best: Option<(f64, i64, i64)> = None;
            for dy in -self.search..=self.search {
                for dx in -self.search..=self.search {
                    if let Some(cand) = self.patch(frame, x0 + dx, y0 + dy) {
                        let s = ncc(tpl, &cand);
                        if best.is_none_or(|(b, _, _)| s > b) {
                            best = Some((s, dx, dy));
                        }
                    }
                }
            }
            match best {
                Some((score, dx, dy)) if score >= self.threshold => {
                    let px = Pixel::new(pt.pixel.u + dx as f64, pt.pixel.v + dy as f64);
                    pt.seen(px, score);
                    if let Some(t) = self.patch(frame, x0 + dx, y0 + dy) {
                        *tpl = t;
                    }
                }
                _ => pt.miss(),
            }
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    Oracle,
    Patch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub kind: TrackerKind,
    /// Oracle pixel noise, px.
    pub sigma_px: f64,
    /// Oracle per-frame dropout probability.
    pub p_drop: f64,
    /// Missed frames before a takeover.
    pub lost_frames: u32,
    pub loss_rule: LossRule,
    pub template_size: usize,
    pub search_radius: u32,
    pub ncc_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kind: TrackerKind::Oracle,
            sigma_px: 0.0,
            p_drop: 0.0,
            lost_frames: 5,
            loss_rule: LossRule::All,
            template_size: 11,
            search_radius: 16,
            ncc_threshold: 0.6,
        }
    }
}

impl TrackerConfig {
    pub fn build(&self, seed: u64) -> Box<dyn PointTracker> {
        match self.kind {
            TrackerKind::Oracle => Box::new(OracleTracker::new(self.sigma_px, self.p_drop, seed)),
            TrackerKind::Patch => Box::new(PatchTracker::new(
                self.template_size,
                self.search_radius,
                self.ncc_threshold,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModel, DepthImage};
    use crate::sim::{ObjectClass, Primitive, Shape};
    use std::sync::Arc;

    fn blank(frame_id: u64) -> Observation {
        let camera = CameraModel::new(75.0, 75.0, 79.5, 59.5, 160, 120).unwrap();
        Observation {
            frame_id,
            width: 160,
            height: 120,
            rgb: vec![0; 160 * 120 * 3],
            depth: DepthImage::new(160, 120),
            camera,
            truth: Arc::new(vec![]),
        }
    }

    fn with_points(missed: &[u32]) -> TrackerState {
        TrackerState {
            points: missed
                .iter()
                .enumerate()
                .map(|(id, m)| TrackedPoint {
                    id,
                    pixel: Pixel::new(0.0, 0.0),
                    visible: *m == 0,
                    confidence: 0.0,
                    missed_frames: *m,
                })
                .collect(),
            last_frame_id: 0,
            memory: vec![Memory::Nothing; missed.len()],
        }
    }

    #[test]
    fn init_examples() {
        let f = blank(0);
        let mut t = OracleTracker::new(0.0, 0.0, 0);
        let s = t.init_tracks(&f, &[Pixel::new(10.0, 10.0), Pixel::new(20.0, 30.0)]).unwrap();
        assert_eq!(s.points.iter().map(|p| p.id).collect::<Vec<_>>(), vec![0, 1]);
        assert!(s.points.iter().all(|p| p.visible && p.missed_frames == 0));
        assert!(t.init_tracks(&f, &[]).unwrap().points.is_empty());
        assert_eq!(
            t.init_tracks(&f, &[Pixel::new(-5.0, 10.0)]),
            Err(TrackerError::OutOfBounds { u: -5.0, v: 10.0 })
        );
    }

    #[test]
    fn stale_frame_is_rejected() {
        let mut t = OracleTracker::new(0.0, 0.0, 0);
        let s = t.init_tracks(&blank(3), &[]).unwrap();
        assert_eq!(t.update(&s, &blank(3)), Err(TrackerError::Ordering { last: 3, got: 3 }));
    }

    #[test]
    fn lost_thresholds() {
        assert!(is_lost(&with_points(&[5, 5]), 5, LossRule::All));
        assert!(!is_lost(&with_points(&[0, 7]), 5, LossRule::All));
        assert!(is_lost(&with_points(&[0, 7]), 5, LossRule::Any));
        assert!(!is_lost(&with_points(&[4]), 5, LossRule::All));
        assert!(!is_lost(&with_points(&[]), 1, LossRule::All));
    }

    #[test]
    fn anchor_behind_camera_is_missed() {
        let mut f = blank(0);
        f.truth = Arc::new(vec![Primitive {
            id: 8,
            owner: 1,
            class: ObjectClass::Ball,
            center: Point3::new(0.0, 0.0, 2.0),
            shape: Shape::Sphere { radius: 0.5 },
        }]);
        let mut t = OracleTracker::new(0.0, 0.0, 0);
        let s = t.init_tracks(&f, &[Pixel::new(79.5, 59.5)]).unwrap();
        let mut g = f.clone();
        g.frame_id = 1;
        // turn the camera around
        g.camera.extrinsics = crate::geometry::RigidTransform::from_yaw(
            0.0,
            nalgebra::Vector3::zeros(),
        );
        g.camera.extrinsics.rotation = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, -1.0));
        let s2 = t.update(&s, &g).unwrap();
        assert!(!s2.points[0].visible);
        assert_eq!(s2.points[0].missed_frames, 1);
    }

    #[test]
    fn ncc_flat_is_zero_and_self_is_one() {
        let a: Vec<f64> = (0..25).map(|i| (i * 7 % 11) as f64).collect();
        assert!((ncc(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(ncc(&a, &[3.0; 25]), 0.0);
    }

    #[test]
    fn retire_removes_point() {
        let mut s = with_points(&[0, 6]);
        s.retire(0);
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].id, 1);
        assert!(is_lost(&s, 5, LossRule::All));
    }
}
