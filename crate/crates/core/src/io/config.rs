//! Flat `key = value` run configuration. Every key is optional; unknown
//! keys are rejected.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::frame::{SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::geometry::CameraIntrinsics;
use crate::sim::{NoiseModel, TrajectoryKind};
use crate::vo::VoConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown configuration key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub fps: u32,
    pub duration_s: f64,
    pub trajectory: TrajectoryKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fps: 300,
            duration_s: 20.0,
            trajectory: TrajectoryKind::Circle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub vo: VoConfig,
    pub noise: NoiseModel,
    pub camera: CameraIntrinsics,
    pub sim: SimConfig,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        /// Every recognized key, in serialization order.
        pub const CONFIG_KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $($key => self.$($field).+ = parse_value(line, key, value)?,)*
                    _ => {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        })
                    }
                }
                Ok(())
            }

            /// All keys with their current values, parseable by [`RunConfig::parse`].
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{} = {}\n", $key, self.$($field).+));)*
                out
            }
        }
    };
}

config_keys! {
    "vo.min_disparity_px" => vo.min_disparity_px;
    "vo.min_parallax_deg" => vo.min_parallax_deg;
    "vo.min_init_points" => vo.min_init_points;
    "vo.kf_min_frame_gap" => vo.kf_min_frame_gap;
    "vo.kf_min_tracked" => vo.kf_min_tracked;
    "vo.kf_depth_ratio" => vo.kf_depth_ratio;
    "vo.kf_bruteforce_below" => vo.kf_bruteforce_below;
    "vo.kf_association_gate_px" => vo.kf_association_gate_px;
    "vo.huber_delta_px" => vo.huber_delta_px;
    "vo.max_lm_iters" => vo.max_lm_iters;
    "vo.epipolar_threshold_px" => vo.epipolar_threshold_px;
    "vo.min_tracking_inliers" => vo.min_tracking_inliers;
    "ransac.max_iterations" => vo.ransac.max_iterations;
    "ransac.threshold_px" => vo.ransac.threshold_px;
    "ransac.confidence" => vo.ransac.confidence;
    "ransac.min_inlier_ratio" => vo.ransac.min_inlier_ratio;
    "ransac.seed" => vo.ransac.seed;
    "match.search_radius" => vo.matching.search_radius;
    "match.max_hamming" => vo.matching.max_hamming;
    "match.max_missed_frames" => vo.matching.max_missed_frames;
    "match.descriptor_memory" => vo.matching.descriptor_memory;
    "noise.p_corner_drop" => noise.p_corner_drop;
    "noise.spurious_rate" => noise.spurious_rate;
    "noise.p_edge_flip" => noise.p_edge_flip;
    "noise.jitter_px" => noise.jitter_px;
    "noise.cluster_size" => noise.cluster_size;
    "camera.fx" => camera.fx;
    "camera.fy" => camera.fy;
    "camera.cx" => camera.cx;
    "camera.cy" => camera.cy;
    "camera.width" => camera.width;
    "camera.height" => camera.height;
    "sim.fps" => sim.fps;
    "sim.duration_s" => sim.duration_s;
    "sim.trajectory" => sim.trajectory;
}

impl RunConfig {
    /// `#` starts a comment; blank lines are ignored; later keys override
    /// earlier ones.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Inconsistent(m.to_string()));
        if !self.camera.is_valid() {
            return fail("camera intrinsics must be positive with the principal point inside the image");
        }
        if self.camera.width as usize != SENSOR_WIDTH || self.camera.height as usize != SENSOR_HEIGHT {
            return fail("camera size must match the 256x256 sensor");
        }
        if !self.noise.is_valid() {
            return fail("noise probabilities must lie in [0, 1], rates and jitter must be non-negative, cluster size 1..=3");
        }
        if self.sim.fps == 0 || !(self.sim.duration_s > 0.0 && self.sim.duration_s.is_finite()) {
            return fail("sim.fps and sim.duration_s must be positive");
        }
        let v = &self.vo;
        let positive = [
            v.huber_delta_px,
            v.kf_association_gate_px,
            v.epipolar_threshold_px,
            v.ransac.threshold_px,
            v.matching.search_radius,
        ];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return fail("pixel thresholds must be positive");
        }
        if !(v.ransac.confidence > 0.0 && v.ransac.confidence < 1.0) {
            return fail("ransac.confidence must lie in (0, 1)");
        }
        if v.matching.descriptor_memory == 0 {
            return fail("match.descriptor_memory must be at least 1");
        }
        Ok(())
    }
}
