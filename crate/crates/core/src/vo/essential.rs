//! Two-view relative pose: normalized 8-point essential matrix inside
//! RANSAC, and cheirality-based decomposition.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector2, Vector3, SVD};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::VoError;
use crate::geometry::{skew, triangulate_normalized, CameraIntrinsics, PixelPoint, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Symmetric epipolar distance threshold in pixels.
    pub threshold_px: f64,
    pub confidence: f64,
    /// Below this inlier fraction the configuration is rejected.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            threshold_px: 2.0,
            confidence: 0.99,
            min_inlier_ratio: 0.3,
            seed: 0,
        }
    }
}

/// `(pixel in view A, pixel in view B)`.
pub type Correspondence = (PixelPoint, PixelPoint);

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialEstimate {
    /// Satisfies `x_bᵀ E x_a = 0` on normalized coordinates.
    pub essential: Matrix3<f64>,
    pub inliers: Vec<bool>,
}

impl EssentialEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn normalized(k: &CameraIntrinsics, px: &PixelPoint) -> Vector2<f64> {
    let x = k.unproject(px);
    Vector2::new(x.x, x.y)
}

/// Isotropic conditioning: centroid at the origin, mean distance √2.
fn conditioning(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mean_dist = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 1e-15 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Replaces the singular values by `(σ, σ, 0)` with σ their mean of the top two.
pub fn project_to_essential(e: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*e, true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let s = &svd.singular_values;
    let sigma = 0.5 * (s[0] + s[1]);
    u * Matrix3::from_diagonal(&Vector3::new(sigma, sigma, 0.0)) * v_t
}

/// Normalized 8-point solver on normalized image coordinates. Needs at
/// least eight pairs; more are solved in the least-squares sense.
pub fn eight_point(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    if a.len() < 8 || a.len() != b.len() {
        return None;
    }
    let (ta, tb) = (conditioning(a), conditioning(b));
    let mut m = DMatrix::<f64>::zeros(a.len(), 9);
    for (i, (pa, pb)) in a.iter().zip(b).enumerate() {
        let xa = ta * Vector3::new(pa.x, pa.y, 1.0);
        let xb = tb * Vector3::new(pb.x, pb.y, 1.0);
        let row = [
            xb.x * xa.x,
            xb.x * xa.y,
            xb.x,
            xb.y * xa.x,
            xb.y * xa.y,
            xb.y,
            xa.x,
            xa.y,
            1.0,
        ];
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    let ata = m.transpose() * &m;
    let eig = SymmetricEigen::new(ata);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let h = eig.eigenvectors.column(idx);
    let e_hat = Matrix3::from_row_slice(h.as_slice());
    let e = tb.transpose() * e_hat * ta;
    let norm = e.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    Some(project_to_essential(&(e / norm)))
}

/// Fundamental matrix in pixel coordinates for `E`.
pub fn fundamental(e: &Matrix3<f64>, k: &CameraIntrinsics) -> Matrix3<f64> {
    let k_inv = k.inverse_matrix();
    k_inv.transpose() * e * k_inv
}

/// Root mean square of the two point-to-epipolar-line distances, in pixels.
pub fn symmetric_epipolar_distance(f: &Matrix3<f64>, a: &PixelPoint, b: &PixelPoint) -> f64 {
    let xa = Vector3::new(a.u, a.v, 1.0);
    let xb = Vector3::new(b.u, b.v, 1.0);
    let lb = f * xa;
    let la = f.transpose() * xb;
    let num = xb.dot(&lb);
    let da2 = num * num / (la.x * la.x + la.y * la.y).max(1e-300);
    let db2 = num * num / (lb.x * lb.x + lb.y * lb.y).max(1e-300);
    (0.5 * (da2 + db2)).sqrt()
}

fn score(f: &Matrix3<f64>, corr: &[Correspondence], threshold: f64) -> Vec<bool> {
    corr.iter()
        .map(|(a, b)| symmetric_epipolar_distance(f, a, b) < threshold)
        .collect()
}

/// Median pixel residual of the best rotation-only model `f_b ≈ R f_a`
/// fitted to all pairs, on bearing vectors.
pub fn rotation_only_residual(corr: &[Correspondence], k: &CameraIntrinsics) -> f64 {
    if corr.is_empty() {
        return f64::INFINITY;
    }
    let mut h = Matrix3::zeros();
    let bearings: Vec<(Vector3<f64>, Vector3<f64>)> = corr
        .iter()
        .map(|(a, b)| (k.unproject(a).normalize(), k.unproject(b).normalize()))
        .collect();
    for (fa, fb) in &bearings {
        h += fa * fb.transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let r = v_t.transpose() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let mut residuals: Vec<f64> = bearings
        .iter()
        .zip(corr)
        .map(|((fa, _), (_, b))| {
            let p = r * fa;
            k.project(&p).map_or(f64::INFINITY, |px| px.distance(b))
        })
        .collect();
    residuals.sort_by(|x, y| x.total_cmp(y));
    residuals[residuals.len() / 2]
}

/// RANSAC over the 8-point solver, scored by symmetric epipolar distance,
/// refit on the inliers of the best hypothesis.
pub fn estimate_essential_ransac(
    corr: &[Correspondence],
    k: &CameraIntrinsics,
    params: &RansacParams,
) -> Result<EssentialEstimate, VoError> {
    const SAMPLE: usize = 8;
    let n = corr.len();
    if n < SAMPLE {
        return Err(VoError::InsufficientCorrespondences(n));
    }
    let na: Vec<Vector2<f64>> = corr.iter().map(|(a, _)| normalized(k, a)).collect();
    let nb: Vec<Vector2<f64>> = corr.iter().map(|(_, b)| normalized(k, b)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<(usize, Matrix3<f64>, Vec<bool>)> = None;
    let mut needed = params.max_iterations;
    let mut iter = 0;
    let (mut sa, mut sb) = (Vec::with_capacity(SAMPLE), Vec::with_capacity(SAMPLE));
    while iter < needed.min(params.max_iterations) {
        iter += 1;
        sa.clear();
        sb.clear();
        for i in sample(&mut rng, n, SAMPLE) {
            sa.push(na[i]);
            sb.push(nb[i]);
        }
        let Some(e) = eight_point(&sa, &sb) else { continue };
        let mask = score(&fundamental(&e, k), corr, params.threshold_px);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            let w = count as f64 / n as f64;
            let denom = (1.0 - w.powi(SAMPLE as i32)).ln();
            if denom < 0.0 {
                let est = ((1.0 - params.confidence).ln() / denom).ceil();
                needed = if est.is_finite() { est.max(1.0) as usize } else { params.max_iterations };
            }
            best = Some((count, e, mask));
        }
    }
    let Some((mut count, mut e, mut mask)) = best else {
        return Err(VoError::DegenerateConfiguration);
    };
    // Refit on all inliers; keep it if it does not lose support.
    let (ia, ib): (Vec<_>, Vec<_>) = (0..n).filter(|&i| mask[i]).map(|i| (na[i], nb[i])).unzip();
    if let Some(refit) = eight_point(&ia, &ib) {
        let refit_mask = score(&fundamental(&refit, k), corr, params.threshold_px);
        let refit_count = refit_mask.iter().filter(|&&b| b).count();
        if refit_count >= count {
            e = refit;
            mask = refit_mask;
            count = refit_count;
        }
    }
    if (count as f64) < params.min_inlier_ratio * n as f64 {
        return Err(VoError::DegenerateConfiguration);
    }
    let inlier_corr: Vec<Correspondence> = (0..n).filter(|&i| mask[i]).map(|i| corr[i]).collect();
    if rotation_only_residual(&inlier_corr, k) < params.threshold_px {
        return Err(VoError::DegenerateConfiguration);
    }
    Ok(EssentialEstimate { essential: e, inliers: mask })
}

/// Fraction of candidate poses' positive-depth votes required to accept.
const CHEIRALITY_MIN_FRACTION: f64 = 0.9;

/// Picks the decomposition of `E` that puts the most points in front of
/// both cameras. Returns `T_ba` (view A to view B) with unit translation.
pub fn recover_pose(e: &Matrix3<f64>, corr: &[Correspondence], k: &CameraIntrinsics) -> Result<RigidTransform, VoError> {
    if corr.is_empty() {
        return Err(VoError::CheiralityAmbiguity);
    }
    let svd = SVD::new(*e, true, true);
    let mut u = svd.u.expect("u");
    let mut v_t = svd.v_t.expect("v_t");
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t: Vector3<f64> = u.column(2).into();
    let candidates = [
        (u * w * v_t, t),
        (u * w * v_t, -t),
        (u * w.transpose() * v_t, t),
        (u * w.transpose() * v_t, -t),
    ];
    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = corr.iter().map(|(a, b)| (k.unproject(a), k.unproject(b))).collect();
    let identity = RigidTransform::identity();
    let mut best = (0usize, RigidTransform::identity());
    for (r, t) in candidates {
        let pose = RigidTransform::from_rotation_matrix(&r, t);
        let votes = rays
            .iter()
            .filter(|(xa, xb)| {
                let p = triangulate_normalized(&identity, &pose, xa, xb);
                p.iter().all(|c| c.is_finite()) && p.z > 0.0 && pose.transform_point(&p).z > 0.0
            })
            .count();
        if votes > best.0 {
            best = (votes, pose);
        }
    }
    if (best.0 as f64) <= CHEIRALITY_MIN_FRACTION * corr.len() as f64 {
        return Err(VoError::CheiralityAmbiguity);
    }
    Ok(best.1)
}

/// `E = [t]× R` for the relative pose `T_ba`.
pub fn essential_from_pose(t_ba: &RigidTransform) -> Matrix3<f64> {
    skew(&t_ba.translation) * t_ba.rotation_matrix()
}
