//! Keyframe policy and insertion: new observations for existing points and
//! triangulation of new points against the previous keyframe.

use std::collections::{BTreeMap, HashMap};

use super::essential::{essential_from_pose, fundamental, symmetric_epipolar_distance};
use super::map::{Keyframe, Map, Observation};
use super::VoConfig;
use crate::descriptor::{hamming, Descriptor44};
use crate::geometry::{parallax_degrees, triangulate, CameraIntrinsics, PixelPoint, RigidTransform};
use crate::tracking::Match;

/// Inputs of the keyframe predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeCheck {
    pub frames_since_last: u64,
    /// Map points tracked in the current frame.
    pub tracked: usize,
    /// Smallest camera-center distance to any existing keyframe.
    pub min_keyframe_distance: f64,
    /// Median camera-frame depth of the tracked map points.
    pub median_depth: f64,
}

pub fn should_insert_keyframe(check: &KeyframeCheck, cfg: &VoConfig) -> bool {
    check.frames_since_last >= cfg.kf_min_frame_gap
        && check.tracked >= cfg.kf_min_tracked
        && check.min_keyframe_distance > cfg.kf_depth_ratio * check.median_depth
}

/// Current-frame data handed to [`insert_keyframe`].
#[derive(Debug, Clone, Copy)]
pub struct KeyframeInput<'a> {
    pub frame_index: u64,
    /// `T_cw` of the frame.
    pub pose: RigidTransform,
    pub points: &'a [PixelPoint],
    pub descriptors: &'a [Descriptor44],
    pub track_ids: &'a [u64],
    /// `(map point id, feature index)` pairs within the association gate.
    pub map_matches: &'a [(u64, usize)],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyframeInsertion {
    pub keyframe_id: u64,
    pub new_points: Vec<u64>,
    pub observations_added: usize,
    /// Tracker pairs with the previous keyframe that passed the epipolar check.
    pub epipolar_matches: usize,
    pub used_bruteforce: bool,
}

/// Registers a keyframe. Existing points gain observations from
/// `map_matches`; tracks shared with the previous keyframe that have no map
/// point yet and pass the epipolar check are triangulated. With fewer than
/// `kf_bruteforce_below` such pairs, descriptor matching against the whole
/// previous keyframe supplements them, keeping only mutual unique best
/// matches. `track_points` maps tracker ids to
/// map point ids and is extended with the new points.
pub fn insert_keyframe(
    input: &KeyframeInput<'_>,
    map: &mut Map,
    track_points: &mut BTreeMap<u64, u64>,
    k: &CameraIntrinsics,
    cfg: &VoConfig,
) -> KeyframeInsertion {
    let prev = map.last_keyframe().cloned();
    let kf_id = map.add_keyframe(Keyframe {
        id: 0,
        pose: input.pose,
        features: input.points.iter().copied().zip(input.descriptors.iter().copied()).collect(),
        track_ids: input.track_ids.to_vec(),
        frame_index: input.frame_index,
    });
    let mut out = KeyframeInsertion {
        keyframe_id: kf_id,
        ..KeyframeInsertion::default()
    };

    let mut used_current = vec![false; input.points.len()];
    for &(point_id, idx) in input.map_matches {
        if let Some(p) = map.point_mut(point_id) {
            p.add_observation(Observation {
                keyframe_id: kf_id,
                pixel: input.points[idx],
                descriptor: input.descriptors[idx],
            });
            used_current[idx] = true;
            out.observations_added += 1;
        }
    }
    let Some(prev) = prev else { return out };

    let relative = input.pose.compose(&prev.pose.inverse());
    let f = fundamental(&essential_from_pose(&relative), k);
    let epipolar_ok = |a: &PixelPoint, b: &PixelPoint| symmetric_epipolar_distance(&f, a, b) < cfg.epipolar_threshold_px;

    let prev_by_track: HashMap<u64, usize> = prev.track_ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut used_prev = vec![false; prev.features.len()];
    for (i, t) in prev.track_ids.iter().enumerate() {
        if track_points.contains_key(t) {
            used_prev[i] = true;
        }
    }
    // (previous keyframe feature, current feature)
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (j, t) in input.track_ids.iter().enumerate() {
        if used_current[j] || track_points.contains_key(t) {
            continue;
        }
        let Some(&i) = prev_by_track.get(t) else { continue };
        if used_prev[i] {
            continue;
        }
        if epipolar_ok(&prev.features[i].0, &input.points[j]) {
            pairs.push((i, j));
        }
    }
    out.epipolar_matches = pairs.len();
    for &(i, j) in &pairs {
        used_prev[i] = true;
        used_current[j] = true;
    }

    if pairs.len() < cfg.kf_bruteforce_below {
        out.used_bruteforce = true;
        let mut candidates = Vec::new();
        for (i, (pa, da)) in prev.features.iter().enumerate() {
            if used_prev[i] {
                continue;
            }
            for j in 0..input.points.len() {
                if used_current[j] {
                    continue;
                }
                let distance = hamming(*da, input.descriptors[j]);
                if distance <= cfg.matching.max_hamming && epipolar_ok(pa, &input.points[j]) {
                    candidates.push(Match {
                        query: i,
                        corner: j,
                        distance,
                        pixel_distance: pa.distance(&input.points[j]),
                    });
                }
            }
        }
        for m in mutual_best(&candidates, prev.features.len(), input.points.len()) {
            pairs.push((m.query, m.corner));
        }
    }

    let (ca, cb) = (prev.camera_center(), input.pose.camera_center());
    for (i, j) in pairs {
        let (pa, da) = prev.features[i];
        let (pb, db) = (input.points[j], input.descriptors[j]);
        let Ok(p) = triangulate(&prev.pose, &input.pose, &pa, &pb, k) else { continue };
        if !parallax_degrees(&ca, &cb, &p).is_ok_and(|a| a >= cfg.min_parallax_deg) {
            continue;
        }
        let reproj_ok = [(&prev.pose, pa), (&input.pose, pb)].iter().all(|(t, u)| {
            k.project(&t.transform_point(&p)).is_ok_and(|px| px.distance(u) <= cfg.huber_delta_px)
        });
        if !reproj_ok {
            continue;
        }
        let id = map.add_point(
            p,
            vec![
                Observation {
                    keyframe_id: prev.id,
                    pixel: pa,
                    descriptor: da,
                },
                Observation {
                    keyframe_id: kf_id,
                    pixel: pb,
                    descriptor: db,
                },
            ],
        );
        track_points.insert(input.track_ids[j], id);
        out.new_points.push(id);
    }
    out
}

/// Candidates that are the unique lowest-distance choice of both their
/// query and their corner.
fn mutual_best(candidates: &[Match], n_queries: usize, n_corners: usize) -> Vec<Match> {
    // (best distance, candidate index, tied)
    let mut best_q: Vec<Option<(u32, usize, bool)>> = vec![None; n_queries];
    let mut best_c: Vec<Option<(u32, usize, bool)>> = vec![None; n_corners];
    for (idx, m) in candidates.iter().enumerate() {
        for slot in [&mut best_q[m.query], &mut best_c[m.corner]] {
            *slot = match *slot {
                Some((d, i, tied)) if d < m.distance => Some((d, i, tied)),
                Some((d, i, _)) if d == m.distance => Some((d, i, true)),
                _ => Some((m.distance, idx, false)),
            };
        }
    }
    candidates
        .iter()
        .enumerate()
        .filter(|(idx, m)| {
            matches!(best_q[m.query], Some((_, i, false)) if i == *idx)
                && matches!(best_c[m.corner], Some((_, i, false)) if i == *idx)
        })
        .map(|(_, m)| *m)
        .collect()
}
