use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::geometry::Point3;

/// Axis-aligned box the scene is generated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBounds {
    pub min: Point3,
    pub max: Point3,
}

impl SceneBounds {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    fn is_valid(&self) -> bool {
        let e = self.extent();
        e.iter().all(|&v| v.is_finite() && v > 0.0)
    }
}

impl Default for SceneBounds {
    /// A wall of clutter 2.5–5 m in front of the origin.
    fn default() -> Self {
        Self {
            min: Vector3::new(-3.5, -3.0, 2.5),
            max: Vector3::new(3.5, 3.0, 5.0),
        }
    }
}

/// Wireframe world: straight edge segments plus the landmark corners the
/// sensor reports. Every corner lies on a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub corners: Vec<Point3>,
    pub segments: Vec<(Point3, Point3)>,
    pub bounds: SceneBounds,
}

/// Side length range of the generated rectangles, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSizes {
    pub min: f64,
    pub max: f64,
}

impl Default for ShapeSizes {
    fn default() -> Self {
        Self { min: 0.2, max: 0.5 }
    }
}

pub fn generate_scene(
    seed: u64,
    n_segments: usize,
    n_corners: usize,
    bounds: &SceneBounds,
) -> Result<Scene, SimError> {
    generate_scene_with_sizes(seed, n_segments, n_corners, bounds, ShapeSizes::default())
}

/// Segments are grouped into rectangles (tabletop-object outlines) with
/// random pose; leftover segments are free-standing. Corner candidates are
/// rectangle vertices first, then points at 1/4, 1/2 and 3/4 along each
/// segment, so at most four corners per segment exist.
pub fn generate_scene_with_sizes(
    seed: u64,
    n_segments: usize,
    n_corners: usize,
    bounds: &SceneBounds,
    sizes: ShapeSizes,
) -> Result<Scene, SimError> {
    if !bounds.is_valid() {
        return Err(SimError::InvalidBounds);
    }
    if n_corners > 4 * n_segments {
        return Err(SimError::TooManyCorners {
            corners: n_corners,
            segments: n_segments,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::with_capacity(n_segments);
    let mut vertices = Vec::new();

    let sample_center = |rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.random_range(bounds.min.x..bounds.max.x),
            rng.random_range(bounds.min.y..bounds.max.y),
            rng.random_range(bounds.min.z..bounds.max.z),
        )
    };
    let sample_orientation = |rng: &mut ChaCha8Rng| {
        // Mostly facing the -z direction so outlines are not seen edge-on.
        UnitQuaternion::from_euler_angles(
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            rng.random_range(0.0..std::f64::consts::PI),
        )
    };

    for _ in 0..n_segments / 4 {
        let center = sample_center(&mut rng);
        let rot = sample_orientation(&mut rng);
        let w = rng.random_range(sizes.min..=sizes.max) / 2.0;
        let h = rng.random_range(sizes.min..=sizes.max) / 2.0;
        let quad: [Point3; 4] = [
            center + rot * Vector3::new(-w, -h, 0.0),
            center + rot * Vector3::new(w, -h, 0.0),
            center + rot * Vector3::new(w, h, 0.0),
            center + rot * Vector3::new(-w, h, 0.0),
        ];
        for i in 0..4 {
            segments.push((quad[i], quad[(i + 1) % 4]));
            vertices.push(quad[i]);
        }
    }
    let mut loose_endpoints = Vec::new();
    for _ in 0..n_segments % 4 {
        let center = sample_center(&mut rng);
        let rot = sample_orientation(&mut rng);
        let half = rng.random_range(sizes.min..=sizes.max) / 2.0;
        let a = center + rot * Vector3::new(-half, 0.0, 0.0);
        let b = center + rot * Vector3::new(half, 0.0, 0.0);
        segments.push((a, b));
        loose_endpoints.push(a);
        loose_endpoints.push(b);
    }

    let mut interior = Vec::with_capacity(3 * segments.len() + loose_endpoints.len());
    for (a, b) in &segments {
        for t in [0.25, 0.5, 0.75] {
            interior.push(a + (b - a) * t);
        }
    }
    interior.extend(loose_endpoints);
    interior.shuffle(&mut rng);

    let corners = vertices
        .into_iter()
        .chain(interior)
        .take(n_corners)
        .collect();
    Ok(Scene {
        corners,
        segments,
        bounds: *bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_on_segment(p: &Point3, a: &Point3, b: &Point3) -> bool {
        let ab = b - a;
        let t = (p - a).dot(&ab) / ab.norm_squared();
        (-1e-12..=1.0 + 1e-12).contains(&t) && (a + ab * t - p).norm() < 1e-9
    }

    #[test]
    fn deterministic_and_corners_on_segments() {
        let b = SceneBounds::default();
        let s1 = generate_scene(1, 403, 900, &b).unwrap();
        let s2 = generate_scene(1, 403, 900, &b).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1, generate_scene(2, 403, 900, &b).unwrap());
        assert_eq!(s1.segments.len(), 403);
        assert_eq!(s1.corners.len(), 900);
        for c in &s1.corners {
            assert!(s1.segments.iter().any(|(a, b)| point_on_segment(c, a, b)));
        }
    }

    #[test]
    fn edge_cases() {
        let b = SceneBounds::default();
        let empty = generate_scene(1, 0, 0, &b).unwrap();
        assert!(empty.segments.is_empty() && empty.corners.is_empty());
        assert_eq!(
            generate_scene(1, 2, 9, &b),
            Err(SimError::TooManyCorners {
                corners: 9,
                segments: 2
            })
        );
        assert_eq!(generate_scene(1, 2, 8, &b).unwrap().corners.len(), 8);
        let flat = SceneBounds::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 1.0));
        assert_eq!(generate_scene(1, 4, 4, &flat), Err(SimError::InvalidBounds));
    }
}
