use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::scene::Scene;
use crate::frame::{EdgeBitmap, FeatureFrame, PixelEvent, MAX_CORNER_EVENTS, SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::geometry::{CameraIntrinsics, PixelPoint, Point3, RigidTransform};

const NEAR_PLANE: f64 = 0.05;

/// Analog readout noise of the focal-plane detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Probability a visible corner is missing from a frame.
    pub p_corner_drop: f64,
    /// Mean number of uniformly placed spurious corners per frame.
    pub spurious_rate: f64,
    /// Per-pixel probability of an edge bit flipping.
    pub p_edge_flip: f64,
    /// Standard deviation of corner position jitter; offsets are rounded to
    /// whole pixels.
    pub jitter_px: f64,
    /// Number of events emitted per visible corner (1 disables clustering).
    pub cluster_size: u8,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p_corner_drop: 0.10,
            spurious_rate: 50.0,
            p_edge_flip: 0.005,
            jitter_px: 0.5,
            cluster_size: 1,
        }
    }
}

impl NoiseModel {
    pub fn off() -> Self {
        Self {
            p_corner_drop: 0.0,
            spurious_rate: 0.0,
            p_edge_flip: 0.0,
            jitter_px: 0.0,
            cluster_size: 1,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.p_corner_drop)
            && (0.0..=1.0).contains(&self.p_edge_flip)
            && self.spurious_rate >= 0.0
            && self.spurious_rate.is_finite()
            && self.jitter_px >= 0.0
            && self.jitter_px.is_finite()
            && (1..=3).contains(&self.cluster_size)
    }
}

/// Renders one frame. `pose` is the camera pose `T_cw`.
pub fn render_frame(
    scene: &Scene,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
    timestamp_ns: u64,
) -> FeatureFrame {
    render_frame_labeled(scene, pose, k, noise, rng, timestamp_ns).0
}

/// As [`render_frame`], additionally returning for each emitted corner the
/// index of the scene corner it came from (`None` for spurious events).
pub fn render_frame_labeled(
    scene: &Scene,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
    timestamp_ns: u64,
) -> (FeatureFrame, Vec<Option<usize>>) {
    let mut edges = EdgeBitmap::new();
    for (a, b) in &scene.segments {
        draw_segment(&mut edges, pose, k, a, b);
    }

    // Keyed by raster order; the first event to claim a pixel keeps it.
    let mut events: BTreeMap<(u8, u8), Option<usize>> = BTreeMap::new();
    let jitter = (noise.jitter_px > 0.0).then(|| Normal::new(0.0, noise.jitter_px).expect("finite std"));
    for (idx, corner) in scene.corners.iter().enumerate() {
        let p_c = pose.transform_point(corner);
        if p_c.z <= NEAR_PLANE {
            continue;
        }
        let Ok(px) = k.project(&p_c) else { continue };
        let (mut x, mut y) = (px.u.round() as i64, px.v.round() as i64);
        if !in_sensor(x, y) {
            continue;
        }
        if noise.p_corner_drop > 0.0 && rng.random_bool(noise.p_corner_drop) {
            continue;
        }
        if let Some(j) = &jitter {
            x += j.sample(rng).round() as i64;
            y += j.sample(rng).round() as i64;
        }
        push_event(&mut events, x, y, Some(idx));
        for _ in 1..noise.cluster_size {
            let dx = rng.random_range(-1..=1);
            let dy = rng.random_range(-1..=1);
            push_event(&mut events, x + dx, y + dy, Some(idx));
        }
    }
    if noise.spurious_rate > 0.0 {
        let count = Poisson::new(noise.spurious_rate)
            .expect("positive rate")
            .sample(rng) as usize;
        for _ in 0..count {
            let x = rng.random_range(0..SENSOR_WIDTH as i64);
            let y = rng.random_range(0..SENSOR_HEIGHT as i64);
            push_event(&mut events, x, y, None);
        }
    }
    if noise.p_edge_flip > 0.0 {
        flip_edges(&mut edges, noise.p_edge_flip, rng);
    }

    let (corners, labels) = events
        .into_iter()
        .take(MAX_CORNER_EVENTS)
        .map(|((y, x), label)| (PixelEvent::new(x, y), label))
        .unzip();
    (
        FeatureFrame {
            timestamp_ns,
            corners,
            edges,
        },
        labels,
    )
}

fn in_sensor(x: i64, y: i64) -> bool {
    (0..SENSOR_WIDTH as i64).contains(&x) && (0..SENSOR_HEIGHT as i64).contains(&y)
}

fn push_event(events: &mut BTreeMap<(u8, u8), Option<usize>>, x: i64, y: i64, label: Option<usize>) {
    if in_sensor(x, y) {
        events.entry((y as u8, x as u8)).or_insert(label);
    }
}

/// Flips each pixel independently with probability `p`, drawing geometric
/// gaps between flipped pixels instead of one Bernoulli trial per pixel.
fn flip_edges(edges: &mut EdgeBitmap, p: f64, rng: &mut ChaCha8Rng) {
    let total = SENSOR_WIDTH * SENSOR_HEIGHT;
    if p >= 1.0 {
        for i in 0..total {
            edges.toggle(i % SENSOR_WIDTH, i / SENSOR_WIDTH);
        }
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let gap = (u.ln() / log_q).floor();
        if gap >= (total - i) as f64 {
            break;
        }
        i += gap as usize;
        edges.toggle(i % SENSOR_WIDTH, i / SENSOR_WIDTH);
        i += 1;
        if i >= total {
            break;
        }
    }
}

fn draw_segment(edges: &mut EdgeBitmap, pose: &RigidTransform, k: &CameraIntrinsics, a: &Point3, b: &Point3) {
    let mut pa = pose.transform_point(a);
    let mut pb = pose.transform_point(b);
    if pa.z <= NEAR_PLANE && pb.z <= NEAR_PLANE {
        return;
    }
    // Clip against the near plane.
    if pa.z <= NEAR_PLANE {
        let t = (NEAR_PLANE - pa.z) / (pb.z - pa.z);
        pa += (pb - pa) * t;
    } else if pb.z <= NEAR_PLANE {
        let t = (NEAR_PLANE - pb.z) / (pa.z - pb.z);
        pb += (pa - pb) * t;
    }
    let (Ok(ua), Ok(ub)) = (k.project(&pa), k.project(&pb)) else {
        return;
    };
    let Some((ua, ub)) = clip_to_sensor(ua, ub) else {
        return;
    };
    rasterize_line(
        edges,
        ua.u.round() as i64,
        ua.v.round() as i64,
        ub.u.round() as i64,
        ub.v.round() as i64,
    );
}

/// Liang–Barsky clipping against the sensor rectangle, padded by half a
/// pixel so rounding stays inside.
fn clip_to_sensor(a: PixelPoint, b: PixelPoint) -> Option<(PixelPoint, PixelPoint)> {
    let (xmin, ymin) = (-0.49, -0.49);
    let (xmax, ymax) = (SENSOR_WIDTH as f64 - 0.51, SENSOR_HEIGHT as f64 - 0.51);
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a.u - xmin),
        (dx, xmax - a.u),
        (-dy, a.v - ymin),
        (dy, ymax - a.v),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((
        PixelPoint::new(a.u + t0 * dx, a.v + t0 * dy),
        PixelPoint::new(a.u + t1 * dx, a.v + t1 * dy),
    ))
}

/// Bresenham line, one pixel wide.
fn rasterize_line(edges: &mut EdgeBitmap, mut x0: i64, mut y0: i64, x1: i64, y1: i64) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if in_sensor(x0, y0) {
            edges.set(x0 as usize, y0 as usize, true);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
