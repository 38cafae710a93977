//! Analytic z-buffer renderer over sphere and box primitives.

use super::{ObjectClass, Primitive, Shape};
use crate::geometry::{CameraModel, DepthImage, Pixel, Point3};
use nalgebra::Vector3;
use std::io::{self, Write};
use std::sync::Arc;

/// One rendered RGBD frame. `truth` is the primitive set the frame was
/// rendered from; only privileged consumers (oracle tracker, oracle brain)
/// read it.
#[derive(Debug, Clone)]
pub struct Observation {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    /// Row-major RGB bytes.
    pub rgb: Vec<u8>,
    pub depth: DepthImage,
    pub camera: CameraModel,
    pub truth: Arc<Vec<Primitive>>,
}

impl Observation {
    pub fn gray(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let i = 3 * (y as usize * self.width as usize + x as usize);
        let (r, g, b) = (self.rgb[i] as f64, self.rgb[i + 1] as f64, self.rgb[i + 2] as f64);
        Some(0.299 * r + 0.587 * g + 0.114 * b)
    }

    /// Binary PPM (P6) of the RGB raster.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.rgb)
    }

    /// 16-bit binary PGM (P5) of depth in millimetres, holes as 0.
    pub fn write_depth_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        for d in &self.depth.data {
            let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
            w.write_all(&mm.to_be_bytes())?;
        }
        Ok(())
    }
}

/// Nearest positive ray parameter; `dir` need not be unit length.
/// Rays starting inside a primitive do not hit it.
pub fn intersect(prim: &Primitive, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let c = prim.center.to_vector();
    match prim.shape {
        Shape::Sphere { radius } => {
            let oc = origin - c;
            let a = dir.dot(dir);
            let b = oc.dot(dir);
            let cc = oc.dot(&oc) - radius * radius;
            let disc = b * b - a * cc;
            if disc < 0.0 {
                return None;
            }
            let t = (-b - disc.sqrt()) / a;
            (t > 1e-12).then_some(t)
        }
        Shape::Cuboid { half, yaw } => {
            let (s, co) = yaw.sin_cos();
            let rel = origin - c;
            // rotate into the box frame by -yaw
            let o = [co * rel.x + s * rel.y, -s * rel.x + co * rel.y, rel.z];
            let d = [co * dir.x + s * dir.y, -s * dir.x + co * dir.y, dir.z];
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for k in 0..3 {
                if d[k].abs() < 1e-15 {
                    if o[k].abs() > half[k] {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d[k];
                let mut t0 = (-half[k] - o[k]) * inv;
                let mut t1 = (half[k] - o[k]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_near = t_near.max(t0);
                t_far = t_far.min(t1);
                if t_near > t_far {
                    return None;
                }
            }
            (t_near > 1e-12).then_some(t_near)
        }
    }
}

/// Closest hit among `prims`, skipping primitives owned by `exclude_owner`.
pub fn raycast<'a>(
    prims: &'a [Primitive],
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    exclude_owner: Option<u32>,
) -> Option<(f64, &'a Primitive)> {
    let mut best: Option<(f64, &Primitive)> = None;
    for p in prims {
        if Some(p.owner) == exclude_owner {
            continue;
        }
        if let Some(t) = intersect(p, origin, dir) {
            if best.is_none_or(|(b, _)| t < b) {
                best = Some((t, p));
            }
        }
    }
    best
}

/// Whether the segment from `from` to `to` is blocked by a primitive not
/// owned by `owner`, ignoring hits within `slack` metres of `to`.
pub fn occluded(prims: &[Primitive], from: &Point3, to: &Point3, owner: Option<u32>, slack: f64) -> bool {
    let o = from.to_vector();
    let d = to.to_vector() - o;
    let len = d.norm();
    if len <= slack {
        return false;
    }
    raycast(prims, &o, &d, owner).is_some_and(|(t, _)| t * len < len - slack)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn texture(prim: &Primitive, hit: &Vector3<f64>) -> f64 {
    let rel = hit - prim.center.to_vector();
    let cell = match prim.shape {
        Shape::Sphere { radius } => {
            let n = rel / radius;
            [(n.x * 3.0).floor(), (n.y * 3.0).floor(), (n.z * 3.0).floor()]
        }
        Shape::Cuboid { yaw, .. } => {
            let (s, c) = yaw.sin_cos();
            let size = prim.class.texture_cell();
            [
                ((c * rel.x + s * rel.y) / size).floor(),
                ((-s * rel.x + c * rel.y) / size).floor(),
                (rel.z / size).floor(),
            ]
        }
    };
    let mut h = splitmix(prim.owner as u64);
    for v in cell {
        h = splitmix(h ^ (v as i64 as u64));
    }
    0.55 + 0.45 * ((h & 0xff) as f64 / 255.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Invalidate the far side of depth discontinuities, like a stereo sensor.
    pub edge_holes: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { edge_holes: true }
    }
}

pub fn render(
    prims: Arc<Vec<Primitive>>,
    camera: &CameraModel,
    frame_id: u64,
    options: RenderOptions,
) -> Observation {
    let (w, h) = (camera.width, camera.height);
    let mut rgb = vec![0u8; w as usize * h as usize * 3];
    let mut depth = DepthImage::new(w, h);
    let origin = camera.extrinsics.translation;
    for y in 0..h {
        for x in 0..w {
            let dir = camera
                .extrinsics
                .apply_vector(&camera.ray_direction(&Pixel::new(x as f64, y as f64)));
            if let Some((t, prim)) = raycast(&prims, &origin, &dir, None) {
                depth.set(x, y, t);
                let hit = origin + dir * t;
                let shade = texture(prim, &hit);
                let base = prim.class.color();
                let i = 3 * (y as usize * w as usize + x as usize);
                for k in 0..3 {
                    rgb[i + k] = (base[k] as f64 * shade).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    if options.edge_holes {
        punch_edge_holes(&mut depth);
    }
    Observation {
        frame_id,
        width: w,
        height: h,
        rgb,
        depth,
        camera: *camera,
        truth: prims,
    }
}

fn punch_edge_holes(depth: &mut DepthImage) {
    let src = depth.clone();
    for y in 0..src.height as i64 {
        for x in 0..src.width as i64 {
            let Some(d) = src.get(x, y).filter(|d| *d > 0.0) else {
                continue;
            };
            let jump = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                src.get(x + dx, y + dy)
                    .is_some_and(|n| n > 0.0 && d - n > 0.08 * d)
            });
            if jump {
                depth.set(x as u32, y as u32, 0.0);
            }
        }
    }
}

impl ObjectClass {
    pub fn color(self) -> [u8; 3] {
        match self {
            ObjectClass::Floor => [110, 110, 100],
            ObjectClass::Table => [150, 120, 90],
            ObjectClass::Wall => [90, 90, 160],
            ObjectClass::Ball => [230, 60, 40],
            ObjectClass::Bottle => [40, 200, 90],
            ObjectClass::Human => [220, 180, 150],
            ObjectClass::Bin => [60, 120, 230],
            ObjectClass::Toy => [250, 220, 40],
            ObjectClass::Container => [170, 140, 230],
            ObjectClass::Drawer => [140, 90, 60],
            ObjectClass::Handle => [40, 40, 40],
            ObjectClass::Banana => [250, 230, 70],
            ObjectClass::Pepper => [200, 30, 30],
            ObjectClass::Carrot => [250, 130, 20],
            ObjectClass::Kiwifruit => [120, 150, 40],
        }
    }

    fn texture_cell(self) -> f64 {
        match self {
            ObjectClass::Floor => 0.25,
            ObjectClass::Table => 0.05,
            ObjectClass::Wall | ObjectClass::Human | ObjectClass::Bin | ObjectClass::Bottle => 0.08,
            _ => 0.02,
        }
    }
}
