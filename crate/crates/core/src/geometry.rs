//! Rigid transforms, pinhole projection and two-view triangulation.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// A 3D point or direction in meters.
pub type Point3 = Vector3<f64>;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("camera baseline is degenerate")]
    DegenerateBaseline,
    #[error("triangulated point lies behind a camera")]
    BehindCamera,
    #[error("ray has zero length")]
    DegenerateRay,
}

/// Real-valued pixel coordinate, `u` rightward and `v` downward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Rigid-body transform `p' = R p + t`.
///
/// Used for camera poses `T_cw` (world into camera) and for camera-to-world
/// poses in trajectory files. Which one a value holds is given by context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_rotation_matrix(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation,
        }
    }

    /// Builds a transform from raw quaternion components `(w, x, y, z)`,
    /// normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
            translation,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        Self {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Center of the camera whose pose `T_cw` this is, in world coordinates.
    pub fn camera_center(&self) -> Point3 {
        -(self.rotation.inverse() * self.translation)
    }

    /// Left-composed local update: `(Exp(ω), v) ∘ self` with
    /// `delta = (ω, v)`. This is the retraction used by the pose optimizer.
    pub fn retract(&self, delta: &Vector6<f64>) -> Self {
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let v = Vector3::new(delta[3], delta[4], delta[5]);
        let update = UnitQuaternion::from_scaled_axis(omega);
        let mut rotation = update * self.rotation;
        rotation.renormalize();
        Self {
            rotation,
            translation: update * self.translation + v,
        }
    }

    /// Rotation angle in radians of `self⁻¹ ∘ other`.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

/// Pinhole intrinsics of a 256×256 sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 160.0,
            fy: 160.0,
            cx: 128.0,
            cy: 128.0,
            width: 256,
            height: 256,
        }
    }
}

impl CameraIntrinsics {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
    }

    pub fn project(&self, p_c: &Point3) -> Result<PixelPoint, GeometryError> {
        if p_c.z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(p_c.z));
        }
        Ok(PixelPoint {
            u: self.fx * p_c.x / p_c.z + self.cx,
            v: self.fy * p_c.y / p_c.z + self.cy,
        })
    }

    /// Normalized image-plane coordinates `(x/z, y/z, 1)` of a pixel.
    pub fn unproject(&self, px: &PixelPoint) -> Point3 {
        Vector3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, px: &PixelPoint) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    t.transform_point(p)
}

pub fn project(k: &CameraIntrinsics, p_c: &Point3) -> Result<PixelPoint, GeometryError> {
    k.project(p_c)
}

/// Linear (DLT) triangulation of one point seen from two camera poses
/// `T_cw`. The result is in world coordinates.
pub fn triangulate(
    pose_a: &RigidTransform,
    pose_b: &RigidTransform,
    px_a: &PixelPoint,
    px_b: &PixelPoint,
    k: &CameraIntrinsics,
) -> Result<Point3, GeometryError> {
    if (pose_a.camera_center() - pose_b.camera_center()).norm() < 1e-9 {
        return Err(GeometryError::DegenerateBaseline);
    }
    let xa = k.unproject(px_a);
    let xb = k.unproject(px_b);
    let p = triangulate_normalized(pose_a, pose_b, &xa, &xb);
    if !p.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::DegenerateBaseline);
    }
    if pose_a.transform_point(&p).z <= 0.0 || pose_b.transform_point(&p).z <= 0.0 {
        return Err(GeometryError::BehindCamera);
    }
    Ok(p)
}

/// DLT on normalized image coordinates; no validity checks.
pub(crate) fn triangulate_normalized(
    pose_a: &RigidTransform,
    pose_b: &RigidTransform,
    xa: &Point3,
    xb: &Point3,
) -> Point3 {
    let pa = projection_rows(pose_a);
    let pb = projection_rows(pose_b);
    let mut a = Matrix4::zeros();
    a.set_row(0, &(xa.x * pa.row(2) - pa.row(0)));
    a.set_row(1, &(xa.y * pa.row(2) - pa.row(1)));
    a.set_row(2, &(xb.x * pb.row(2) - pb.row(0)));
    a.set_row(3, &(xb.y * pb.row(2) - pb.row(1)));
    // Rows are rescaled so that the smallest singular vector is not dominated
    // by one camera.
    for mut row in a.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let eig = (a.transpose() * a).symmetric_eigen();
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("4 eigenvalues");
    let h = eig.eigenvectors.column(min_idx);
    Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3])
}

fn projection_rows(pose: &RigidTransform) -> nalgebra::Matrix3x4<f64> {
    let r = pose.rotation_matrix();
    let t = pose.translation;
    let mut p = nalgebra::Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    p.set_column(3, &t);
    p
}

/// Angle in degrees at `p` between the rays towards two camera centers.
pub fn parallax_degrees(
    center_a: &Point3,
    center_b: &Point3,
    p: &Point3,
) -> Result<f64, GeometryError> {
    let ra = center_a - p;
    let rb = center_b - p;
    let (na, nb) = (ra.norm(), rb.norm());
    if na < 1e-12 || nb < 1e-12 {
        return Err(GeometryError::DegenerateRay);
    }
    // atan2 form stays accurate for nearly parallel rays.
    let angle = ra.cross(&rb).norm().atan2(ra.dot(&rb));
    Ok(angle.to_degrees())
}

/// Skew-symmetric cross-product matrix.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Intrinsic Z-Y-X Euler angles `(roll, pitch, yaw)` in degrees.
pub fn euler_zyx_degrees(q: &UnitQuaternion<f64>) -> (f64, f64, f64) {
    let (roll, pitch, yaw) = q.euler_angles();
    (roll.to_degrees(), pitch.to_degrees(), yaw.to_degrees())
}
