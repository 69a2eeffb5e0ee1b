//! Trajectory association, similarity alignment and absolute trajectory
//! error.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::{euler_zyx_degrees, Point3, RigidTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no estimated pose lies within the time tolerance of a ground-truth pose")]
    NoOverlap,
    #[error("positions are collinear or coincident; alignment is undefined")]
    DegenerateGeometry,
    #[error("trajectory timestamps must strictly increase (entry {0})")]
    NonMonotonicTimestamps(usize),
}

/// Timestamped poses (seconds, camera-to-world).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<(f64, RigidTransform)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(f64, RigidTransform)>) -> Result<Self, EvalError> {
        if let Some(i) = entries.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(EvalError::NonMonotonicTimestamps(i + 1));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, timestamp: f64, pose: RigidTransform) -> Result<(), EvalError> {
        if let Some((last, _)) = self.entries.last() {
            if timestamp <= *last {
                return Err(EvalError::NonMonotonicTimestamps(self.entries.len()));
            }
        }
        self.entries.push((timestamp, pose));
        Ok(())
    }

    pub fn entries(&self) -> &[(f64, RigidTransform)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Summed length of the position path.
    pub fn path_length(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].1.translation - w[0].1.translation).norm())
            .sum()
    }
}

/// An estimated pose paired with its ground-truth counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub timestamp: f64,
    pub estimate: RigidTransform,
    pub ground_truth: RigidTransform,
}

/// Similarity `x ↦ s·R·x + t` taking estimated positions onto ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityAlignment {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityAlignment {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Applies the alignment to a camera-to-world pose.
    pub fn apply_pose(&self, pose: &RigidTransform) -> RigidTransform {
        let r = UnitQuaternion::from_matrix(&self.rotation);
        RigidTransform::new(r * pose.rotation, self.apply(&pose.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteStats {
    pub rmse: f64,
    pub median: f64,
    pub mean: f64,
    pub length: f64,
    pub pairs: usize,
}

pub const DEFAULT_MAX_DT: f64 = 0.002;

/// Nearest-timestamp association; each ground-truth entry is used at most
/// once, closest pairs first.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<PosePair>, EvalError> {
    let gt_times: Vec<f64> = gt.entries.iter().map(|e| e.0).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (t, _)) in est.entries.iter().enumerate() {
        let j = gt_times.partition_point(|g| g < t);
        let nearest = [j.checked_sub(1), (j < gt_times.len()).then_some(j)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (gt_times[a] - t).abs().total_cmp(&(gt_times[b] - t).abs()));
        if let Some(j) = nearest {
            let dt = (gt_times[j] - t).abs();
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut gt_used = vec![false; gt.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (_, i, j) in candidates {
        if !gt_used[j] {
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    pairs.sort_unstable();
    Ok(pairs
        .into_iter()
        .map(|(i, j)| PosePair {
            timestamp: gt.entries[j].0,
            estimate: est.entries[i].1,
            ground_truth: gt.entries[j].1,
        })
        .collect())
}

/// Closed-form least-squares similarity (Umeyama) on camera positions.
pub fn align_umeyama_sim3(pairs: &[PosePair]) -> Result<SimilarityAlignment, EvalError> {
    let est: Vec<Point3> = pairs.iter().map(|p| p.estimate.translation).collect();
    let gt: Vec<Point3> = pairs.iter().map(|p| p.ground_truth.translation).collect();
    umeyama(&est, &gt)
}

pub fn umeyama(src: &[Point3], dst: &[Point3]) -> Result<SimilarityAlignment, EvalError> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(EvalError::DegenerateGeometry);
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / nf;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (cs, cd) = (s - mu_s, d - mu_d);
        cov += cd * cs.transpose();
        scatter += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov /= nf;
    var_s /= nf;

    let spread = scatter.symmetric_eigen().eigenvalues;
    let mut spread: Vec<f64> = spread.iter().copied().collect();
    spread.sort_by(|a, b| b.total_cmp(a));
    if spread[0] <= 1e-300 || spread[1] <= 1e-12 * spread[0] {
        return Err(EvalError::DegenerateGeometry);
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * sign[(i, i)]).sum();
    let scale = trace / var_s;
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(SimilarityAlignment {
        scale,
        rotation,
        translation,
    })
}

pub fn compute_ate(pairs: &[PosePair], alignment: &SimilarityAlignment) -> AteStats {
    let mut errors: Vec<f64> = pairs
        .iter()
        .map(|p| (p.ground_truth.translation - alignment.apply(&p.estimate.translation)).norm())
        .collect();
    let n = errors.len().max(1) as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mean = errors.iter().sum::<f64>() / n;
    let length = pairs
        .windows(2)
        .map(|w| (w[1].ground_truth.translation - w[0].ground_truth.translation).norm())
        .sum();
    AteStats {
        rmse,
        median: median(&mut errors),
        mean,
        length,
        pairs: pairs.len(),
    }
}

/// Per-axis RMSE in degrees between aligned estimated and ground-truth
/// Euler angles (roll, pitch, yaw), with angle wrapping.
pub fn orientation_rmse_deg(pairs: &[PosePair], alignment: &SimilarityAlignment) -> [f64; 3] {
    let mut sums = [0.0; 3];
    for p in pairs {
        let est = alignment.apply_pose(&p.estimate);
        let e = euler_zyx_degrees(&est.rotation);
        let g = euler_zyx_degrees(&p.ground_truth.rotation);
        for (sum, d) in sums.iter_mut().zip([e.0 - g.0, e.1 - g.1, e.2 - g.2]) {
            let w = wrap_degrees(d);
            *sum += w * w;
        }
    }
    let n = pairs.len().max(1) as f64;
    sums.map(|s| (s / n).sqrt())
}

pub fn wrap_degrees(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(times: &[f64], f: impl Fn(f64) -> Point3) -> Trajectory {
        Trajectory::from_entries(
            times
                .iter()
                .map(|&t| (t, RigidTransform::new(UnitQuaternion::identity(), f(t))))
                .collect(),
        )
        .unwrap()
    }

    fn helix(t: f64) -> Point3 {
        Vector3::new(t.cos(), t.sin(), 0.3 * t)
    }

    #[test]
    fn association_examples() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let a = traj(&times, helix);
        assert_eq!(associate(&a, &a, DEFAULT_MAX_DT).unwrap().len(), 50);

        let later: Vec<f64> = times.iter().map(|t| t + 10.0).collect();
        assert_eq!(
            associate(&a, &traj(&later, helix), DEFAULT_MAX_DT),
            Err(EvalError::NoOverlap)
        );

        let est_t: Vec<f64> = (0..300).map(|i| i as f64 / 300.0).collect();
        let gt_t: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let pairs = associate(&traj(&est_t, helix), &traj(&gt_t, helix), DEFAULT_MAX_DT).unwrap();
        assert_eq!(pairs.len(), 100);
    }

    #[test]
    fn rejects_non_monotonic() {
        let p = RigidTransform::identity();
        assert_eq!(
            Trajectory::from_entries(vec![(1.0, p), (1.0, p)]),
            Err(EvalError::NonMonotonicTimestamps(1))
        );
    }

    #[test]
    fn umeyama_examples() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let gt = traj(&times, helix);
        let pairs = associate(&gt, &gt, DEFAULT_MAX_DT).unwrap();
        let a = align_umeyama_sim3(&pairs).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-12);
        assert!((a.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(a.translation.norm() < 1e-12);

        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        let est = traj(&times, |t| 0.5 * (rot * helix(t)));
        let pairs = associate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        let a = align_umeyama_sim3(&pairs).unwrap();
        assert!((a.scale - 2.0).abs() < 1e-9);
        let expected = rot.inverse().to_rotation_matrix().into_inner();
        assert!((a.rotation - expected).norm() < 1e-9);
        assert!(a.translation.norm() < 1e-9);

        let two = &pairs[..2];
        assert_eq!(align_umeyama_sim3(two), Err(EvalError::DegenerateGeometry));
        let line = traj(&times, |t| Vector3::new(t, 2.0 * t, 0.0));
        let pairs = associate(&line, &line, DEFAULT_MAX_DT).unwrap();
        assert_eq!(align_umeyama_sim3(&pairs), Err(EvalError::DegenerateGeometry));
    }

    #[test]
    fn ate_examples() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let gt = traj(&times, helix);
        let pairs = associate(&gt, &gt, DEFAULT_MAX_DT).unwrap();
        let stats = compute_ate(&pairs, &align_umeyama_sim3(&pairs).unwrap());
        assert!(stats.rmse < 1e-12 && stats.median < 1e-12);
        assert!((stats.length - gt.path_length()).abs() < 1e-12);

        let shifted = traj(&times, |t| helix(t) + Vector3::new(0.0, 0.1, 0.0));
        let pairs = associate(&shifted, &gt, DEFAULT_MAX_DT).unwrap();
        let stats = compute_ate(&pairs, &SimilarityAlignment::identity());
        assert!((stats.rmse - 0.1).abs() < 1e-12);
        assert!((stats.median - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_direct_loop_and_is_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.05).collect();
        let gt = traj(&times, helix);
        let noisy: Vec<Point3> = times
            .iter()
            .map(|&t| helix(t) + Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0))
            .collect();
        let est = Trajectory::from_entries(
            times
                .iter()
                .zip(&noisy)
                .map(|(&t, p)| (t, RigidTransform::new(UnitQuaternion::identity(), *p)))
                .collect(),
        )
        .unwrap();
        let pairs = associate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        let align = align_umeyama_sim3(&pairs).unwrap();
        let stats = compute_ate(&pairs, &align);

        let mut sq = 0.0;
        for p in &pairs {
            let q = align.scale * (align.rotation * p.estimate.translation) + align.translation;
            sq += (q - p.ground_truth.translation).norm_squared();
        }
        assert!((stats.rmse.powi(2) - sq / pairs.len() as f64).abs() < 1e-15);

        // Arbitrary similarity applied to the estimate first.
        let m = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        let moved = Trajectory::from_entries(
            est.entries()
                .iter()
                .map(|(t, p)| {
                    (
                        *t,
                        RigidTransform::new(p.rotation, 3.7 * (m * p.translation) + Vector3::new(5.0, -2.0, 1.0)),
                    )
                })
                .collect(),
        )
        .unwrap();
        let pairs2 = associate(&moved, &gt, DEFAULT_MAX_DT).unwrap();
        let stats2 = compute_ate(&pairs2, &align_umeyama_sim3(&pairs2).unwrap());
        assert!((stats.rmse - stats2.rmse).abs() < 1e-9);
        assert!((stats.median - stats2.median).abs() < 1e-9);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
    }
}
