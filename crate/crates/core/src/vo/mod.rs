//! Monocular odometry: bootstrapping, per-frame pose tracking against the
//! map, keyframe insertion and structure-only refinement.

pub mod ba;
pub mod essential;
pub mod init;
pub mod keyframe;
pub mod map;
pub mod pose;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::eval::median;
use crate::frame::FeatureFrame;
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::tracking::{match_map_to_frame, FrameFeatures, MatchParams, TrackStep, Tracker};

pub use ba::{structure_only_ba, BaConfig};
pub use essential::{estimate_essential_ransac, recover_pose, RansacParams};
pub use init::{try_initialize, InitFrame, Initialization, NotReady, TrackPair};
pub use keyframe::{insert_keyframe, should_insert_keyframe, KeyframeCheck, KeyframeInput, KeyframeInsertion};
pub use map::{Keyframe, Map, MapPoint, Observation};
pub use pose::{estimate_pose, PoseConfig, PoseEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoError {
    #[error("{0} correspondences, need at least 8")]
    InsufficientCorrespondences(usize),
    #[error("{0} matches, need at least 4")]
    InsufficientMatches(usize),
    #[error("degenerate two-view configuration")]
    DegenerateConfiguration,
    #[error("no pose decomposition has enough points in front of both cameras")]
    CheiralityAmbiguity,
    #[error("numerical failure in the optimizer")]
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoConfig {
    pub min_disparity_px: f64,
    pub min_parallax_deg: f64,
    pub min_init_points: usize,
    pub kf_min_frame_gap: u64,
    pub kf_min_tracked: usize,
    pub kf_depth_ratio: f64,
    pub kf_bruteforce_below: usize,
    pub huber_delta_px: f64,
    /// Reprojection gate for map points counted as tracked by the keyframe
    /// predicate and observed by a new keyframe.
    pub kf_association_gate_px: f64,
    pub max_lm_iters: usize,
    pub ransac: RansacParams,
    /// Epipolar threshold for triangulating tracker pairs at keyframes.
    pub epipolar_threshold_px: f64,
    /// Fewer pose inliers than this declares the frame lost.
    pub min_tracking_inliers: usize,
    pub matching: MatchParams,
}

impl Default for VoConfig {
    fn default() -> Self {
        Self {
            min_disparity_px: 20.0,
            min_parallax_deg: 5.0,
            min_init_points: 100,
            kf_min_frame_gap: 200,
            kf_min_tracked: 50,
            kf_depth_ratio: 0.12,
            kf_bruteforce_below: 30,
            huber_delta_px: 2.0,
            kf_association_gate_px: 4.0,
            max_lm_iters: 10,
            ransac: RansacParams::default(),
            epipolar_threshold_px: 2.0,
            min_tracking_inliers: 15,
            matching: MatchParams {
                max_missed_frames: 20,
                descriptor_memory: 16,
                ..MatchParams::default()
            },
        }
    }
}

impl VoConfig {
    pub fn pose_config(&self) -> PoseConfig {
        PoseConfig {
            huber_delta_px: self.huber_delta_px,
            max_lm_iters: self.max_lm_iters,
        }
    }

    pub fn ba_config(&self) -> BaConfig {
        BaConfig {
            huber_delta_px: self.huber_delta_px,
            max_lm_iters: self.max_lm_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackingState {
    /// Waiting for enough disparity to bootstrap.
    Initializing,
    Tracking,
    /// Pose held from the previous frame.
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub timestamp_ns: u64,
    pub state: TrackingState,
    /// `T_cw`, absent before initialization.
    pub pose: Option<RigidTransform>,
    pub matches: usize,
    pub inliers: usize,
    pub keyframe: Option<KeyframeInsertion>,
    /// Set on the frame that bootstrapped the map.
    pub initialized: bool,
    /// Reference-frame tracks still alive while initializing.
    pub init_pairs: usize,
    /// Why the initialization attempt on this frame did not succeed.
    pub not_ready: Option<NotReady>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VoStats {
    pub frames: u64,
    pub initialized_at: Option<u64>,
    pub lost_frames: u64,
    pub keyframes: usize,
    pub bruteforce_insertions: usize,
    pub pruned_points: usize,
}

/// The odometry state machine, fed one frame at a time.
pub struct VisualOdometry {
    k: CameraIntrinsics,
    cfg: VoConfig,
    tracker: Tracker,
    map: Option<Map>,
    reference: Option<InitFrame>,
    pose: RigidTransform,
    /// Tracker id to map point id.
    track_points: BTreeMap<u64, u64>,
    last_keyframe_frame: u64,
    stats: VoStats,
}

impl VisualOdometry {
    pub fn new(k: CameraIntrinsics, cfg: VoConfig) -> Self {
        Self {
            k,
            cfg,
            tracker: Tracker::new(cfg.matching),
            map: None,
            reference: None,
            pose: RigidTransform::identity(),
            track_points: BTreeMap::new(),
            last_keyframe_frame: 0,
            stats: VoStats::default(),
        }
    }

    pub fn config(&self) -> &VoConfig {
        &self.cfg
    }

    pub fn map(&self) -> Option<&Map> {
        self.map.as_ref()
    }

    pub fn stats(&self) -> VoStats {
        self.stats
    }

    pub fn is_initialized(&self) -> bool {
        self.map.is_some()
    }

    pub fn process(&mut self, frame: &FeatureFrame) -> FrameResult {
        let features = FrameFeatures::from_frame(frame);
        let step = self.tracker.step(&features);
        let frame_index = self.tracker.frame_index();
        self.stats.frames += 1;
        let mut result = FrameResult {
            frame_index,
            timestamp_ns: frame.timestamp_ns,
            state: TrackingState::Initializing,
            pose: None,
            matches: 0,
            inliers: 0,
            keyframe: None,
            initialized: false,
            init_pairs: 0,
            not_ready: None,
        };
        if self.map.is_none() {
            self.initialize(&features, &step, frame_index, &mut result);
        } else {
            self.track(&features, &step, frame_index, &mut result);
        }
        result
    }

    fn initialize(&mut self, features: &FrameFeatures, step: &TrackStep, frame_index: u64, result: &mut FrameResult) {
        let current = InitFrame {
            frame_index,
            features: features.points.iter().copied().zip(features.descriptors.iter().copied()).collect(),
            track_ids: step.corner_tracks.clone(),
        };
        let Some(reference) = &self.reference else {
            self.reference = Some(current);
            return;
        };
        let by_track: HashMap<u64, usize> = reference.track_ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let pairs: Vec<TrackPair> = current
            .track_ids
            .iter()
            .enumerate()
            .filter_map(|(j, t)| {
                let &i = by_track.get(t)?;
                Some(TrackPair {
                    track_id: *t,
                    reference: reference.features[i],
                    current: current.features[j],
                })
            })
            .collect();
        result.init_pairs = pairs.len();
        // Success needs more surviving pairs than points; start over once
        // too few tracks remain.
        if pairs.len() <= self.cfg.min_init_points {
            self.reference = Some(current);
            return;
        }
        match try_initialize(&pairs, reference, &current, &self.k, &self.cfg) {
            Ok(init) => {
                self.pose = init.pose;
                self.track_points = init.associations.into_iter().collect();
                self.map = Some(init.map);
                self.last_keyframe_frame = frame_index;
                self.reference = None;
                self.stats.initialized_at = Some(frame_index);
                self.stats.keyframes = 2;
                result.state = TrackingState::Tracking;
                result.pose = Some(self.pose);
                result.initialized = true;
            }
            Err(reason) => result.not_ready = Some(reason),
        }
    }

    fn track(&mut self, features: &FrameFeatures, step: &TrackStep, frame_index: u64, result: &mut FrameResult) {
        let map = self.map.as_mut().expect("initialized");
        // Projection search around the previous pose.
        let mut by_corner: BTreeMap<usize, u64> = BTreeMap::new();
        let mut claimed: HashMap<u64, usize> = HashMap::new();
        for m in match_map_to_frame(map.points(), &self.pose, &self.k, features, &self.cfg.matching) {
            by_corner.insert(m.corner, m.point_id);
            claimed.insert(m.point_id, m.corner);
        }
        // Tracks already tied to a map point carry the association forward.
        for (corner, track) in step.corner_tracks.iter().enumerate() {
            if by_corner.contains_key(&corner) {
                continue;
            }
            if let Some(&pid) = self.track_points.get(track) {
                if map.point(pid).is_some() && !claimed.contains_key(&pid) {
                    by_corner.insert(corner, pid);
                    claimed.insert(pid, corner);
                }
            }
        }
        let pairs: Vec<(usize, u64)> = by_corner.into_iter().collect();
        let matches: Vec<(Point3, crate::geometry::PixelPoint)> = pairs
            .iter()
            .map(|&(c, pid)| (map.point(pid).expect("present").position, features.points[c]))
            .collect();
        result.matches = matches.len();

        let estimate = estimate_pose(&matches, &self.pose, &self.k, &self.cfg.pose_config());
        let estimate = match estimate {
            Ok(e) if e.inlier_count() >= self.cfg.min_tracking_inliers => e,
            _ => {
                self.stats.lost_frames += 1;
                result.state = TrackingState::Lost;
                result.pose = Some(self.pose);
                return;
            }
        };
        self.pose = estimate.pose;
        result.state = TrackingState::Tracking;
        result.pose = Some(self.pose);
        result.inliers = estimate.inlier_count();

        let inlier_pairs: Vec<(u64, usize)> = pairs
            .iter()
            .zip(&estimate.inliers)
            .filter(|(_, &ok)| ok)
            .map(|(&(c, pid), _)| (pid, c))
            .collect();
        for &(pid, c) in &inlier_pairs {
            self.track_points.insert(step.corner_tracks[c], pid);
        }

        // Keyframe bookkeeping uses a wider gate than the pose inliers so
        // points with stale positions still gain observations and get refined.
        let gate = self.cfg.kf_association_gate_px;
        let tracked_pairs: Vec<(u64, usize)> = pairs
            .iter()
            .filter(|&&(c, pid)| {
                let p = map.point(pid).expect("present").position;
                pose::reprojection_residual(&self.pose, &self.k, &p, &features.points[c]).norm() <= gate
                    && self.pose.transform_point(&p).z > 0.0
            })
            .map(|&(c, pid)| (pid, c))
            .collect();
        let mut depths: Vec<f64> = tracked_pairs
            .iter()
            .map(|&(pid, _)| self.pose.transform_point(&map.point(pid).expect("present").position).z)
            .collect();
        let center = self.pose.camera_center();
        let min_distance = map
            .keyframes()
            .iter()
            .map(|kf| (kf.camera_center() - center).norm())
            .fold(f64::INFINITY, f64::min);
        let check = KeyframeCheck {
            frames_since_last: frame_index - self.last_keyframe_frame,
            tracked: tracked_pairs.len(),
            min_keyframe_distance: min_distance,
            median_depth: median(&mut depths),
        };
        if should_insert_keyframe(&check, &self.cfg) {
            let input = KeyframeInput {
                frame_index,
                pose: self.pose,
                points: &features.points,
                descriptors: &features.descriptors,
                track_ids: &step.corner_tracks,
                map_matches: &tracked_pairs,
            };
            let insertion = insert_keyframe(&input, map, &mut self.track_points, &self.k, &self.cfg);
            let pruned = structure_only_ba(map, &self.k, &self.cfg.ba_config());
            self.track_points.retain(|_, pid| map.point(*pid).is_some());
            self.last_keyframe_frame = frame_index;
            self.stats.keyframes += 1;
            self.stats.pruned_points += pruned;
            if insertion.used_bruteforce {
                self.stats.bruteforce_insertions += 1;
            }
            result.keyframe = Some(insertion);
        }
    }
}
