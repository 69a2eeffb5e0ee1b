//! Map bootstrapping from a reference frame and a later frame that share
//! tracked features.

use super::essential::{estimate_essential_ransac, recover_pose, Correspondence};
use super::map::{Keyframe, Map, Observation};
use super::{VoConfig, VoError};
use crate::descriptor::Descriptor44;
use crate::eval::median;
use crate::geometry::{parallax_degrees, triangulate_normalized, CameraIntrinsics, PixelPoint, RigidTransform};

/// One tracked feature seen in both the reference and the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPair {
    pub track_id: u64,
    pub reference: (PixelPoint, Descriptor44),
    pub current: (PixelPoint, Descriptor44),
}

/// Frame data the two initial keyframes are built from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitFrame {
    pub frame_index: u64,
    pub features: Vec<(PixelPoint, Descriptor44)>,
    pub track_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NotReady {
    /// Median displacement still at or below the threshold.
    InsufficientDisparity(f64),
    Estimation(VoError),
    TooFewPoints(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    /// Keyframe 0 is the reference (identity pose), keyframe 1 the current frame.
    pub map: Map,
    /// `T_cw` of the current frame.
    pub pose: RigidTransform,
    /// `(track id, map point id)` for every triangulated pair.
    pub associations: Vec<(u64, u64)>,
}

pub fn median_disparity(pairs: &[TrackPair]) -> f64 {
    let mut d: Vec<f64> = pairs.iter().map(|p| p.reference.0.distance(&p.current.0)).collect();
    median(&mut d)
}

/// Relative pose, triangulation and parallax/cheirality filtering. The map
/// is scaled so the median depth in the reference camera is 1.
pub fn try_initialize(
    pairs: &[TrackPair],
    reference: &InitFrame,
    current: &InitFrame,
    k: &CameraIntrinsics,
    cfg: &VoConfig,
) -> Result<Initialization, NotReady> {
    let disparity = median_disparity(pairs);
    if pairs.is_empty() || disparity <= cfg.min_disparity_px {
        return Err(NotReady::InsufficientDisparity(disparity));
    }
    let corr: Vec<Correspondence> = pairs.iter().map(|p| (p.reference.0, p.current.0)).collect();
    let est = estimate_essential_ransac(&corr, k, &cfg.ransac).map_err(NotReady::Estimation)?;
    let inlier_corr: Vec<Correspondence> = corr.iter().zip(&est.inliers).filter(|(_, &b)| b).map(|(c, _)| *c).collect();
    let pose = recover_pose(&est.essential, &inlier_corr, k).map_err(NotReady::Estimation)?;

    let identity = RigidTransform::identity();
    let (ca, cb) = (identity.camera_center(), pose.camera_center());
    let max_err = cfg.ransac.threshold_px;
    let mut kept = Vec::new();
    for (pair, _) in pairs.iter().zip(&est.inliers).filter(|(_, &b)| b) {
        let (xa, xb) = (k.unproject(&pair.reference.0), k.unproject(&pair.current.0));
        let p = triangulate_normalized(&identity, &pose, &xa, &xb);
        if !p.iter().all(|c| c.is_finite()) || p.z <= 0.0 || pose.transform_point(&p).z <= 0.0 {
            continue;
        }
        match parallax_degrees(&ca, &cb, &p) {
            Ok(angle) if angle >= cfg.min_parallax_deg => {}
            _ => continue,
        }
        let reproj_ok = [(identity, pair.reference.0), (pose, pair.current.0)].iter().all(|(t, u)| {
            k.project(&t.transform_point(&p)).is_ok_and(|px| px.distance(u) <= max_err)
        });
        if reproj_ok {
            kept.push((pair, p));
        }
    }
    if kept.len() <= cfg.min_init_points {
        return Err(NotReady::TooFewPoints(kept.len()));
    }

    let mut map = Map::new();
    let kf0 = map.add_keyframe(Keyframe {
        id: 0,
        pose: identity,
        features: reference.features.clone(),
        track_ids: reference.track_ids.clone(),
        frame_index: reference.frame_index,
    });
    let kf1 = map.add_keyframe(Keyframe {
        id: 0,
        pose,
        features: current.features.clone(),
        track_ids: current.track_ids.clone(),
        frame_index: current.frame_index,
    });
    let mut associations = Vec::with_capacity(kept.len());
    for (pair, p) in &kept {
        let obs = vec![
            Observation {
                keyframe_id: kf0,
                pixel: pair.reference.0,
                descriptor: pair.reference.1,
            },
            Observation {
                keyframe_id: kf1,
                pixel: pair.current.0,
                descriptor: pair.current.1,
            },
        ];
        associations.push((pair.track_id, map.add_point(*p, obs)));
    }
    let mut depths: Vec<f64> = kept.iter().map(|(_, p)| p.z).collect();
    let scale = 1.0 / median(&mut depths);
    map.rescale(scale);
    let pose = map.keyframe(kf1).expect("just added").pose;
    Ok(Initialization { map, pose, associations })
}
