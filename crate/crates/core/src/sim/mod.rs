//! Deterministic simulator of the focal-plane sensor's output: per frame a
//! list of corner events and a 256×256 binary edge bitmap, with analog
//! readout noise.

mod render;
mod scene;
mod trajectory;

pub use render::{render_frame, render_frame_labeled, NoiseModel};
pub use scene::{generate_scene, generate_scene_with_sizes, Scene, SceneBounds, ShapeSizes};
pub use trajectory::{sample_trajectory, TrajectoryKind, TrajectoryModel};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::Trajectory;
use crate::frame::FeatureFrame;
use crate::geometry::CameraIntrinsics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scene bounds must have positive extent on every axis")]
    InvalidBounds,
    #[error("{corners} corners requested but {segments} segments hold at most {}", 4 * segments)]
    TooManyCorners { corners: usize, segments: usize },
    #[error("invalid sequence parameters: {0}")]
    InvalidSequence(String),
    #[error("noise model parameters out of range")]
    InvalidNoise,
}

/// Default scene: 1000 segments (250 rectangles) whose 1000 vertices are the
/// corners, spread over [`SceneBounds::default`].
pub fn default_scene(seed: u64) -> Scene {
    generate_scene(seed, DEFAULT_SEGMENTS, DEFAULT_CORNERS, &SceneBounds::default())
        .expect("default scene parameters are valid")
}

pub const DEFAULT_SEGMENTS: usize = 1000;
pub const DEFAULT_CORNERS: usize = 1000;

/// Lazily renders a sequence frame by frame.
pub struct SequenceGenerator<'a> {
    scene: &'a Scene,
    model: TrajectoryModel,
    k: CameraIntrinsics,
    noise: NoiseModel,
    fps: u32,
    count: usize,
    next: usize,
    rng: ChaCha8Rng,
}

impl<'a> SequenceGenerator<'a> {
    pub fn new(
        scene: &'a Scene,
        model: TrajectoryModel,
        k: CameraIntrinsics,
        noise: NoiseModel,
        fps: u32,
        duration: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if fps == 0 {
            return Err(SimError::InvalidSequence("fps must be positive".into()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(SimError::InvalidSequence("duration must be positive".into()));
        }
        if !noise.is_valid() {
            return Err(SimError::InvalidNoise);
        }
        Ok(Self {
            scene,
            model,
            k,
            noise,
            fps,
            count: (duration * fps as f64).round() as usize,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.count
    }

    pub fn timestamp_ns(&self, index: usize) -> u64 {
        (index as u128 * 1_000_000_000u128 / self.fps as u128) as u64
    }

    /// Ground-truth camera-to-world pose of frame `index`.
    pub fn ground_truth(&self, index: usize) -> crate::geometry::RigidTransform {
        sample_trajectory(&self.model, self.timestamp_ns(index) as f64 * 1e-9)
    }

    pub fn ground_truth_trajectory(&self) -> Trajectory {
        Trajectory::from_entries(
            (0..self.count)
                .map(|i| (self.timestamp_ns(i) as f64 * 1e-9, self.ground_truth(i)))
                .collect(),
        )
        .expect("timestamps strictly increase")
    }

    /// Next frame together with the scene-corner label of each event.
    pub fn next_labeled(&mut self) -> Option<(FeatureFrame, Vec<Option<usize>>)> {
        if self.next >= self.count {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let pose_cw = self.ground_truth(i).inverse();
        let timestamp = self.timestamp_ns(i);
        Some(render_frame_labeled(
            self.scene,
            &pose_cw,
            &self.k,
            &self.noise,
            &mut self.rng,
            timestamp,
        ))
    }
}

impl Iterator for SequenceGenerator<'_> {
    type Item = FeatureFrame;

    fn next(&mut self) -> Option<FeatureFrame> {
        self.next_labeled().map(|(f, _)| f)
    }
}

/// Renders a whole sequence; the ground truth holds camera-to-world poses.
pub fn generate_sequence(
    scene: &Scene,
    model: &TrajectoryModel,
    k: &CameraIntrinsics,
    noise: &NoiseModel,
    fps: u32,
    duration: f64,
    seed: u64,
) -> Result<(Vec<FeatureFrame>, Trajectory), SimError> {
    let generator = SequenceGenerator::new(scene, *model, *k, *noise, fps, duration, seed)?;
    let gt = generator.ground_truth_trajectory();
    Ok((generator.collect(), gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_length_and_determinism() {
        let scene = default_scene(1);
        let model = TrajectoryModel::default_for(TrajectoryKind::Circle);
        let k = CameraIntrinsics::default();
        let noise = NoiseModel::default();
        let (frames, gt) = generate_sequence(&scene, &model, &k, &noise, 300, 0.2, 9).unwrap();
        assert_eq!(frames.len(), 60);
        assert_eq!(gt.len(), frames.len());
        assert!(frames.windows(2).all(|w| w[0].timestamp_ns < w[1].timestamp_ns));
        let (again, _) = generate_sequence(&scene, &model, &k, &noise, 300, 0.2, 9).unwrap();
        assert_eq!(frames, again);
        let (other, _) = generate_sequence(&scene, &model, &k, &noise, 300, 0.2, 10).unwrap();
        assert_ne!(frames, other);
        assert!(generate_sequence(&scene, &model, &k, &noise, 0, 1.0, 1).is_err());
        assert!(generate_sequence(&scene, &model, &k, &noise, 300, 0.0, 1).is_err());
    }

    #[test]
    fn one_second_at_300_fps() {
        let scene = default_scene(1);
        let g = SequenceGenerator::new(
            &scene,
            TrajectoryModel::default_for(TrajectoryKind::Jump),
            CameraIntrinsics::default(),
            NoiseModel::off(),
            300,
            1.0,
            1,
        )
        .unwrap();
        assert_eq!(g.frame_count(), 300);
        assert_eq!(g.timestamp_ns(299), 996_666_666);
    }

    #[test]
    fn static_noise_free_frames_repeat() {
        let scene = default_scene(2);
        let still = TrajectoryModel::Circle {
            radius: 0.0,
            period: 1.0,
            roll_deg: 0.0,
        };
        let (frames, _) = generate_sequence(
            &scene,
            &still,
            &CameraIntrinsics::default(),
            &NoiseModel::off(),
            300,
            0.05,
            3,
        )
        .unwrap();
        assert!(frames.windows(2).all(|w| w[0].corners == w[1].corners && w[0].edges == w[1].edges));
    }
}
