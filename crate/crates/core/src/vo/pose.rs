//! Per-frame camera pose from 2D-3D matches by robust reprojection
//! minimization.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix2x6, Vector2, Vector6};

use super::VoError;
use crate::geometry::{skew, CameraIntrinsics, PixelPoint, Point3, RigidTransform};
use crate::lm::{levenberg_marquardt, HuberLoss, LmConfig, LmError, LmProblem};

/// Smallest depth used when a point drifts behind the camera mid-solve.
const MIN_DEPTH: f64 = 1e-6;
/// Matches consistent with the prior needed to skip the all-matches solve.
const MIN_GATED: usize = 12;
const MAX_ROUNDS: usize = 4;

/// `π(T p) - u` for camera pose `T_cw`.
pub fn reprojection_residual(pose: &RigidTransform, k: &CameraIntrinsics, p_w: &Point3, u: &PixelPoint) -> Vector2<f64> {
    let p_c = pose.transform_point(p_w);
    let z = p_c.z.max(MIN_DEPTH);
    Vector2::new(k.fx * p_c.x / z + k.cx - u.u, k.fy * p_c.y / z + k.cy - u.v)
}

/// Derivative of the pixel projection with respect to the camera-frame point.
pub fn projection_jacobian(k: &CameraIntrinsics, p_c: &Point3) -> Matrix2x3<f64> {
    let z = p_c.z.max(MIN_DEPTH);
    let iz = 1.0 / z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * p_c.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * p_c.y * iz * iz,
    )
}

/// Jacobian of the residual with respect to the left tangent update
/// `(ω, v)` of [`RigidTransform::retract`].
pub fn pose_jacobian(pose: &RigidTransform, k: &CameraIntrinsics, p_w: &Point3) -> Matrix2x6<f64> {
    let p_c = pose.transform_point(p_w);
    let jp = projection_jacobian(k, &p_c);
    let mut j = Matrix2x6::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jp * -skew(&p_c)));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jp);
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseConfig {
    pub huber_delta_px: f64,
    pub max_lm_iters: usize,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            huber_delta_px: 2.0,
            max_lm_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: RigidTransform,
    /// Per match: final residual norm within the Huber delta.
    pub inliers: Vec<bool>,
    pub cost: f64,
    /// LM iterations summed over all solves.
    pub iterations: usize,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

struct PoseProblem<'a> {
    matches: &'a [(Point3, PixelPoint)],
    k: &'a CameraIntrinsics,
}

impl LmProblem for PoseProblem<'_> {
    type Params = RigidTransform;

    fn dim(&self) -> usize {
        6
    }

    fn block_size(&self) -> usize {
        2
    }

    fn residuals(&self, pose: &RigidTransform) -> DVector<f64> {
        let mut r = DVector::zeros(2 * self.matches.len());
        for (i, (p, u)) in self.matches.iter().enumerate() {
            let e = reprojection_residual(pose, self.k, p, u);
            r[2 * i] = e.x;
            r[2 * i + 1] = e.y;
        }
        r
    }

    fn jacobian(&self, pose: &RigidTransform) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * self.matches.len(), 6);
        for (i, (p, _)) in self.matches.iter().enumerate() {
            j.fixed_view_mut::<2, 6>(2 * i, 0).copy_from(&pose_jacobian(pose, self.k, p));
        }
        j
    }

    fn retract(&self, pose: &RigidTransform, step: &DVector<f64>) -> RigidTransform {
        pose.retract(&Vector6::from_iterator(step.iter().copied()))
    }
}

fn lm_error(e: LmError) -> VoError {
    match e {
        LmError::NumericalFailure | LmError::NonFinite | LmError::DimensionMismatch { .. } => VoError::NumericalFailure,
    }
}

/// Minimizes the Huber-robust reprojection error over the camera pose,
/// starting from `init` (the previous frame's pose).
///
/// When at least `MIN_GATED` matches already reproject within the Huber
/// delta at `init`, only those are optimized, and the inlier set is
/// reclassified and re-solved until it stops changing (at most `MAX_ROUNDS`
/// solves). Otherwise all matches are solved once, followed by one more
/// solve on the resulting inliers.
pub fn estimate_pose(
    matches: &[(Point3, PixelPoint)],
    init: &RigidTransform,
    k: &CameraIntrinsics,
    cfg: &PoseConfig,
) -> Result<PoseEstimate, VoError> {
    if matches.len() < 4 {
        return Err(VoError::InsufficientMatches(matches.len()));
    }
    let lm_cfg = LmConfig {
        max_iters: cfg.max_lm_iters,
        loss: Some(HuberLoss::new(cfg.huber_delta_px)),
        ..LmConfig::default()
    };
    let classify = |pose: &RigidTransform| -> Vec<bool> {
        matches
            .iter()
            .map(|(p, u)| {
                pose.transform_point(p).z > 0.0 && reprojection_residual(pose, k, p, u).norm() <= cfg.huber_delta_px
            })
            .collect()
    };
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    let solve = |subset: &[(Point3, PixelPoint)], from: &RigidTransform| {
        levenberg_marquardt(&PoseProblem { matches: subset, k }, *from, &lm_cfg).map_err(lm_error)
    };
    let mut inliers = classify(init);
    let mut pose = *init;
    let mut cost;
    let mut iterations = 0;
    if count(&inliers) >= MIN_GATED {
        let mut rounds = 0;
        loop {
            let subset: Vec<(Point3, PixelPoint)> = matches.iter().zip(&inliers).filter(|(_, &b)| b).map(|(m, _)| *m).collect();
            let res = solve(&subset, &pose)?;
            iterations += res.iterations;
            pose = res.params;
            cost = res.cost;
            let next = classify(&pose);
            rounds += 1;
            if next == inliers || rounds == MAX_ROUNDS || count(&next) < MIN_GATED {
                inliers = next;
                break;
            }
            inliers = next;
        }
    } else {
        let first = solve(matches, init)?;
        pose = first.params;
        cost = first.cost;
        iterations += first.iterations;
        inliers = classify(&pose);
        let n_in = count(&inliers);
        if n_in < matches.len() && n_in >= 4 {
            let subset: Vec<(Point3, PixelPoint)> = matches.iter().zip(&inliers).filter(|(_, &b)| b).map(|(m, _)| *m).collect();
            let second = solve(&subset, &pose)?;
            iterations += second.iterations;
            pose = second.params;
            cost = second.cost;
            inliers = classify(&pose);
        }
    }
    Ok(PoseEstimate {
        pose,
        inliers,
        cost,
        iterations,
    })
}
