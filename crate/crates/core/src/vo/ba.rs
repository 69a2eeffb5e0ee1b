//! Structure-only bundle adjustment: keyframe poses stay fixed and every
//! map point is refined independently over its observations.

use nalgebra::{DMatrix, DVector};

use super::map::{Map, Observation};
use super::pose::{projection_jacobian, reprojection_residual};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::lm::{levenberg_marquardt, HuberLoss, LmConfig, LmProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaConfig {
    pub huber_delta_px: f64,
    pub max_lm_iters: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            huber_delta_px: 2.0,
            max_lm_iters: 10,
        }
    }
}

struct PointProblem<'a> {
    views: Vec<(&'a RigidTransform, &'a Observation)>,
    k: &'a CameraIntrinsics,
}

impl LmProblem for PointProblem<'_> {
    type Params = Point3;

    fn dim(&self) -> usize {
        3
    }

    fn block_size(&self) -> usize {
        2
    }

    fn residuals(&self, p: &Point3) -> DVector<f64> {
        let mut r = DVector::zeros(2 * self.views.len());
        for (i, (pose, obs)) in self.views.iter().enumerate() {
            let e = reprojection_residual(pose, self.k, p, &obs.pixel);
            r[2 * i] = e.x;
            r[2 * i + 1] = e.y;
        }
        r
    }

    fn jacobian(&self, p: &Point3) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * self.views.len(), 3);
        for (i, (pose, _)) in self.views.iter().enumerate() {
            let jp = projection_jacobian(self.k, &pose.transform_point(p)) * pose.rotation_matrix();
            j.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&jp);
        }
        j
    }

    fn retract(&self, p: &Point3, step: &DVector<f64>) -> Point3 {
        p + Point3::new(step[0], step[1], step[2])
    }
}

/// Refines every map point with ≥2 observations, then removes points with
/// any observation residual above the Huber delta or any non-positive depth.
/// Returns the number of removed points.
pub fn structure_only_ba(map: &mut Map, k: &CameraIntrinsics, cfg: &BaConfig) -> usize {
    let lm_cfg = LmConfig {
        max_iters: cfg.max_lm_iters,
        loss: Some(HuberLoss::new(cfg.huber_delta_px)),
        ..LmConfig::default()
    };
    let poses: Vec<RigidTransform> = map.keyframes().iter().map(|kf| kf.pose).collect();
    let mut doomed = Vec::new();
    for point in map.points_mut() {
        let views: Vec<(&RigidTransform, &Observation)> = point
            .observations()
            .iter()
            .filter_map(|o| poses.get(o.keyframe_id as usize).map(|p| (p, o)))
            .collect();
        if views.len() >= 2 {
            let problem = PointProblem { views, k };
            if let Ok(res) = levenberg_marquardt(&problem, point.position, &lm_cfg) {
                point.position = res.params;
            }
        }
        let bad = point.observations().iter().any(|o| {
            let Some(pose) = poses.get(o.keyframe_id as usize) else {
                return false;
            };
            pose.transform_point(&point.position).z <= 0.0
                || reprojection_residual(pose, k, &point.position, &o.pixel).norm() > cfg.huber_delta_px
        });
        if bad {
            doomed.push(point.id);
        }
    }
    for id in &doomed {
        map.remove_point(*id);
    }
    doomed.len()
}
