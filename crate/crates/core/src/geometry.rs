//! Camera models, pose representations, and the mask-guided virtual-camera
//! reparameterization.
//!
//! A virtual camera is built per frame by cropping the object region with an
//! axis-aligned uniform-scale transform `M`. With virtual intrinsics
//! `K_v = M * K`, a real-camera pose `(R, t)` maps to the virtual pose
//! `(K_v^-1 M K R, K_v^-1 M K t)` and the identity
//! `M * project(K, pose, x) = perspective(K_v, R_v x + t_v)` holds exactly.
//! Under the virtual camera the object center stays on the optical axis, so a
//! pose reduces to a rotation plus a distance (four degrees of freedom).

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    PointBehindCamera { z: f64 },
    #[error("mask bounding box is empty or degenerate (side {side} px, minimum {min} px)")]
    EmptyMask { side: f64, min: f64 },
    #[error("intrinsics matrix is singular")]
    SingularIntrinsics,
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        Self { fx, fy, cx, cy }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Result<Matrix3<f64>, GeometryError> {
        self.matrix().try_inverse().ok_or(GeometryError::SingularIntrinsics)
    }
}

/// Rigid object pose: `x_cam = rotation * x_obj + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose6D {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// Orthonormality defect: max of |R^T R - I| entries and |det R - 1|.
    pub fn rotation_defect(&self) -> f64 {
        let rtr = self.rotation.transpose() * self.rotation;
        let mut d: f64 = (self.rotation.determinant() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                d = d.max((rtr[(i, j)] - target).abs());
            }
        }
        d
    }

    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Inverse pose as a rigid transform (requires orthonormal rotation).
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -rt * self.translation)
    }

    /// Composition: `(self * other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Pose6D) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }
}

/// Reduced pose under a virtual camera: rotation plus camera-to-object-center
/// distance along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose4D {
    pub rotation: Matrix3<f64>,
    pub distance: f64,
}

impl Pose4D {
    pub fn new(rotation: Matrix3<f64>, distance: f64) -> Self {
        assert!(distance > 0.0, "distance must be positive");
        Self { rotation, distance }
    }
}

/// Axis-aligned uniform-scale crop `u' = scale * u + offset`, stored in
/// homogeneous form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub scale: f64,
    pub offset: Vector2<f64>,
}

impl CropTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, offset: Vector2::zeros() }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.scale, 0.0, self.offset.x,
            0.0, self.scale, self.offset.y,
            0.0, 0.0, 1.0,
        )
    }

    pub fn apply(&self, u: &Vector2<f64>) -> Vector2<f64> {
        u * self.scale + self.offset
    }

    pub fn inverse(&self) -> Self {
        Self { scale: 1.0 / self.scale, offset: -self.offset / self.scale }
    }
}

/// Per-frame virtual camera: crop transform plus the induced intrinsics
/// `K_v = M * K` (which stays in pinhole form for axis-aligned uniform crops).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    pub intrinsics_v: CameraIntrinsics,
    pub crop: CropTransform,
    pub resolution: (u32, u32),
}

/// Ray with a unit direction; coordinates are whatever frame the caller built
/// it in (object frame throughout this crate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn point_at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }

    /// Entry/exit parameters of the intersection with a centered sphere, if
    /// any part of it lies in front of the origin.
    pub fn sphere_intersection(&self, radius: f64) -> Option<(f64, f64)> {
        let b = self.origin.dot(&self.direction);
        let c = self.origin.norm_squared() - radius * radius;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let (t0, t1) = (-b - sq, -b + sq);
        if t1 <= 0.0 {
            None
        } else {
            Some((t0.max(0.0), t1))
        }
    }
}

/// Pixel bounding box, inclusive of `min`, exclusive of `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl PixelBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vector2<f64> {
        (self.min + self.max) * 0.5
    }
}

/// Perspective projection `u = K(Rx + t)` with division by depth.
pub fn project(
    k: &CameraIntrinsics,
    pose: &Pose6D,
    x: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let xc = pose.transform(x);
    if xc.z <= 0.0 {
        return Err(GeometryError::PointBehindCamera { z: xc.z });
    }
    Ok(Vector2::new(
        k.fx * xc.x / xc.z + k.cx,
        k.fy * xc.y / xc.z + k.cy,
    ))
}

/// Perspective projection with a general (not necessarily orthonormal) linear
/// part, as produced by [`to_virtual`].
pub fn project_general(
    k: &CameraIntrinsics,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    x: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let xc = rotation * x + translation;
    if xc.z <= 0.0 {
        return Err(GeometryError::PointBehindCamera { z: xc.z });
    }
    Ok(Vector2::new(
        k.fx * xc.x / xc.z + k.cx,
        k.fy * xc.y / xc.z + k.cy,
    ))
}

/// Minimum accepted mask bounding-box side in pixels; smaller boxes produce
/// degenerate virtual intrinsics.
pub const MIN_BBOX_SIDE: f64 = 8.0;

/// Build the virtual camera for one frame from its mask bounding box.
///
/// The box is expanded by `margin` (fraction of its max side), squared, and
/// mapped onto the target resolution. `K_v = M * K` restricted to pinhole
/// form.
pub fn make_virtual_camera(
    mask_bbox: &PixelBox,
    k: &CameraIntrinsics,
    target_resolution: (u32, u32),
    margin: f64,
) -> Result<VirtualCamera, GeometryError> {
    let side = mask_bbox.width().max(mask_bbox.height());
    if side < MIN_BBOX_SIDE {
        return Err(GeometryError::EmptyMask { side, min: MIN_BBOX_SIDE });
    }
    let half = side * (1.0 + margin) * 0.5;
    let center = mask_bbox.center();
    let (tw, th) = (target_resolution.0 as f64, target_resolution.1 as f64);
    // Uniform scale: the expanded square must fit both target dimensions.
    let scale = tw.min(th) / (2.0 * half);
    let offset = Vector2::new(
        tw * 0.5 - scale * center.x,
        th * 0.5 - scale * center.y,
    );
    let crop = CropTransform { scale, offset };
    let m = crop.matrix();
    let mk = m * k.matrix();
    let intrinsics_v = CameraIntrinsics::new(mk[(0, 0)], mk[(1, 1)], mk[(0, 2)], mk[(1, 2)]);
    Ok(VirtualCamera { intrinsics_v, crop, resolution: target_resolution })
}

/// Transfer a real-camera pose into the virtual camera system:
/// `(R_v, t_v) = (K_v^-1 M K R, K_v^-1 M K t)`.
///
/// `R_v` is generally not orthonormal; it reproduces the cropped projection
/// exactly but is not a rigid motion.
pub fn to_virtual(
    k: &CameraIntrinsics,
    k_v: &CameraIntrinsics,
    m: &CropTransform,
    pose: &Pose6D,
) -> Result<(Matrix3<f64>, Vector3<f64>), GeometryError> {
    let kv_inv = k_v.inverse_matrix()?;
    let a = kv_inv * m.matrix() * k.matrix();
    Ok((a * pose.rotation, a * pose.translation))
}

/// Extrinsics of a reduced pose: the object center is pinned to the virtual
/// optical axis, so `t = (0, 0, distance)`.
pub fn pose4d_to_virtual_extrinsics(p: &Pose4D) -> Pose6D {
    Pose6D::new(p.rotation, Vector3::new(0.0, 0.0, p.distance))
}

/// Back-project a pixel into an object-frame ray.
///
/// The origin is the camera center `-R^T t`; the direction is the normalized
/// `R^T K^-1 (u, 1)`.
pub fn pixel_to_ray(
    k: &CameraIntrinsics,
    pose: &Pose6D,
    u: &Vector2<f64>,
) -> Result<Ray, GeometryError> {
    let k_inv = k.inverse_matrix()?;
    let rt = pose.rotation.transpose();
    let dir_cam = k_inv * Vector3::new(u.x, u.y, 1.0);
    let direction = (rt * dir_cam).normalize();
    let origin = -rt * pose.translation;
    Ok(Ray { origin, direction })
}

/// Geodesic distance between two rotations in degrees, clamped to [0, 180].
pub fn geodesic_rotation_distance(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let c = ((ra.transpose() * rb).trace() - 1.0) * 0.5;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Quaternion with the scalar part forced non-negative, the canonical wire
/// form for rotations.
pub fn rotation_to_quat_wxyz(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    if w < 0.0 {
        [-w, -x, -y, -z]
    } else {
        [w, x, y, z]
    }
}

pub fn quat_wxyz_to_rotation(q: &[f64; 4]) -> Matrix3<f64> {
    let uq = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    *uq.to_rotation_matrix().matrix()
}

/// Trajectory record: `{frame, q:[w,x,y,z], t:[x,y,z]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: u32,
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(frame: u32, pose: &Pose6D) -> Self {
        Self {
            frame,
            q: rotation_to_quat_wxyz(&pose.rotation),
            t: [pose.translation.x, pose.translation.y, pose.translation.z],
        }
    }

    pub fn to_pose(&self) -> Pose6D {
        Pose6D::new(
            quat_wxyz_to_rotation(&self.q),
            Vector3::new(self.t[0], self.t[1], self.t[2]),
        )
    }
}

/// Virtual-camera record: `{frame, kv:[fx,fy,cx,cy], m_scale, m_offset, res}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualCameraRecord {
    pub frame: u32,
    pub kv: [f64; 4],
    pub m_scale: f64,
    pub m_offset: [f64; 2],
    pub res: [u32; 2],
}

impl VirtualCameraRecord {
    pub fn from_camera(frame: u32, vcam: &VirtualCamera) -> Self {
        let k = &vcam.intrinsics_v;
        Self {
            frame,
            kv: [k.fx, k.fy, k.cx, k.cy],
            m_scale: vcam.crop.scale,
            m_offset: [vcam.crop.offset.x, vcam.crop.offset.y],
            res: [vcam.resolution.0, vcam.resolution.1],
        }
    }

    pub fn to_camera(&self) -> VirtualCamera {
        VirtualCamera {
            intrinsics_v: CameraIntrinsics::new(self.kv[0], self.kv[1], self.kv[2], self.kv[3]),
            crop: CropTransform {
                scale: self.m_scale,
                offset: Vector2::new(self.m_offset[0], self.m_offset[1]),
            },
            resolution: (self.res[0], self.res[1]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.gen::<f64>() - 0.5,
            rng.gen::<f64>() - 0.5,
            rng.gen::<f64>() - 0.5,
        )
        .normalize();
        let angle = rng.gen::<f64>() * std::f64::consts::PI;
        *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6D {
        Pose6D::new(
            random_rotation(rng),
            Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                2.0 + rng.gen::<f64>(),
            ),
        )
    }

    #[test]
    fn project_on_optical_axis() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0);
        let pose = Pose6D::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let u = project(&k, &pose, &Vector3::zeros()).unwrap();
        assert_relative_eq!(u.x, 0.0);
        assert_relative_eq!(u.y, 0.0);
    }

    #[test]
    fn project_principal_point_offset() {
        let k = CameraIntrinsics::new(1.0, 1.0, 100.0, 50.0);
        let pose = Pose6D::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let u = project(&k, &pose, &Vector3::zeros()).unwrap();
        assert_relative_eq!(u.x, 100.0);
        assert_relative_eq!(u.y, 50.0);
    }

    #[test]
    fn project_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let k = CameraIntrinsics::new(
                50.0 + rng.gen::<f64>() * 500.0,
                50.0 + rng.gen::<f64>() * 500.0,
                rng.gen::<f64>() * 100.0,
                rng.gen::<f64>() * 100.0,
            );
            let pose = random_pose(&mut rng);
            let x = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let xc = pose.transform(&x);
            if xc.z <= 1e-3 {
                continue;
            }
            // Oracle: independent homogeneous composition.
            let h = k.matrix() * xc;
            let expect = Vector2::new(h.x / h.z, h.y / h.z);
            let got = project(&k, &pose, &x).unwrap();
            assert_relative_eq!(got.x, expect.x, epsilon = 1e-12);
            assert_relative_eq!(got.y, expect.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn project_rejects_point_behind_camera() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0);
        let pose = Pose6D::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0));
        let err = project(&k, &pose, &Vector3::zeros()).unwrap_err();
        assert!(matches!(err, GeometryError::PointBehindCamera { .. }));
    }

    #[test]
    fn full_image_bbox_gives_identity_crop() {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 32.0);
        let bbox = PixelBox { min: Vector2::new(0.0, 0.0), max: Vector2::new(64.0, 64.0) };
        let vcam = make_virtual_camera(&bbox, &k, (64, 64), 0.0).unwrap();
        assert_relative_eq!(vcam.crop.scale, 1.0, epsilon = 1e-12);
        assert_relative_eq!(vcam.crop.offset.norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(vcam.intrinsics_v.fx, k.fx, epsilon = 1e-12);
    }

    #[test]
    fn centered_square_bbox_crop() {
        // 100 px square centered at (200, 200) onto 128x128: scale 1.28 and
        // the box corner (150, 150) maps to (0, 0).
        let k = CameraIntrinsics::new(300.0, 300.0, 200.0, 200.0);
        let bbox = PixelBox {
            min: Vector2::new(150.0, 150.0),
            max: Vector2::new(250.0, 250.0),
        };
        let vcam = make_virtual_camera(&bbox, &k, (128, 128), 0.0).unwrap();
        assert_relative_eq!(vcam.crop.scale, 1.28, epsilon = 1e-12);
        let corner = vcam.crop.apply(&Vector2::new(150.0, 150.0));
        assert_relative_eq!(corner.x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(corner.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn tiny_bbox_rejected() {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 32.0);
        let bbox = PixelBox { min: Vector2::new(10.0, 10.0), max: Vector2::new(11.0, 11.0) };
        let err = make_virtual_camera(&bbox, &k, (64, 64), 0.2).unwrap_err();
        assert!(matches!(err, GeometryError::EmptyMask { .. }));
    }

    #[test]
    fn to_virtual_identity_crop_is_identity() {
        let k = CameraIntrinsics::new(120.0, 130.0, 30.0, 40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = random_pose(&mut rng);
        let (rv, tv) = to_virtual(&k, &k, &CropTransform::identity(), &pose).unwrap();
        assert_relative_eq!((rv - pose.rotation).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!((tv - pose.translation).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn to_virtual_scale_two_matrix_oracle() {
        let k = CameraIntrinsics::new(120.0, 130.0, 30.0, 40.0);
        let m = CropTransform { scale: 2.0, offset: Vector2::zeros() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pose = random_pose(&mut rng);
        let (rv, _) = to_virtual(&k, &k, &m, &pose).unwrap();
        let d = Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0));
        let oracle = k.inverse_matrix().unwrap() * d * k.matrix() * pose.rotation;
        assert_relative_eq!((rv - oracle).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn virtual_projection_identity_randomized() {
        // M * project(K, pose, x) == perspective(K_v, R_v x + t_v) exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 1000 {
            let k = CameraIntrinsics::new(
                80.0 + rng.gen::<f64>() * 400.0,
                80.0 + rng.gen::<f64>() * 400.0,
                20.0 + rng.gen::<f64>() * 60.0,
                20.0 + rng.gen::<f64>() * 60.0,
            );
            let m = CropTransform {
                scale: 0.5 + rng.gen::<f64>() * 3.0,
                offset: Vector2::new(
                    (rng.gen::<f64>() - 0.5) * 100.0,
                    (rng.gen::<f64>() - 0.5) * 100.0,
                ),
            };
            let mk = m.matrix() * k.matrix();
            let k_v = CameraIntrinsics::new(mk[(0, 0)], mk[(1, 1)], mk[(0, 2)], mk[(1, 2)]);
            let pose = random_pose(&mut rng);
            let x = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            if pose.transform(&x).z <= 1e-3 {
                continue;
            }
            let (rv, tv) = to_virtual(&k, &k_v, &m, &pose).unwrap();
            let lhs = m.apply(&project(&k, &pose, &x).unwrap());
            let rhs = project_general(&k_v, &rv, &tv, &x).unwrap();
            assert_relative_eq!(lhs.x, rhs.x, epsilon = 1e-9);
            assert_relative_eq!(lhs.y, rhs.y, epsilon = 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn pose4d_extrinsics_center_on_axis() {
        let p = Pose4D::new(
            *Rotation3::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2).matrix(),
            2.5,
        );
        let pose = pose4d_to_virtual_extrinsics(&p);
        assert_relative_eq!((pose.rotation - p.rotation).norm(), 0.0);
        assert_relative_eq!(pose.translation.x, 0.0);
        assert_relative_eq!(pose.translation.y, 0.0);
        assert_relative_eq!(pose.translation.z, 2.5);

        // Object center reprojects exactly to the principal point.
        let k = CameraIntrinsics::new(200.0, 220.0, 31.5, 33.5);
        let u = project(&k, &pose, &Vector3::zeros()).unwrap();
        assert_relative_eq!(u.x, k.cx, epsilon = 1e-12);
        assert_relative_eq!(u.y, k.cy, epsilon = 1e-12);
    }

    #[test]
    fn pixel_to_ray_simple_case() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0);
        let pose = Pose6D::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 2.0));
        let ray = pixel_to_ray(&k, &pose, &Vector2::zeros()).unwrap();
        assert_relative_eq!((ray.origin - Vector3::new(0.0, 0.0, -2.0)).norm(), 0.0);
        assert_relative_eq!((ray.direction - Vector3::new(0.0, 0.0, 1.0)).norm(), 0.0);
    }

    #[test]
    fn pixel_to_ray_roundtrip_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let k = CameraIntrinsics::new(
                50.0 + rng.gen::<f64>() * 300.0,
                50.0 + rng.gen::<f64>() * 300.0,
                rng.gen::<f64>() * 64.0,
                rng.gen::<f64>() * 64.0,
            );
            let pose = random_pose(&mut rng);
            let u = Vector2::new(rng.gen::<f64>() * 64.0, rng.gen::<f64>() * 64.0);
            let ray = pixel_to_ray(&k, &pose, &u).unwrap();
            assert_relative_eq!(ray.direction.norm(), 1.0, epsilon = 1e-9);
            let p = ray.point_at(3.0);
            if pose.transform(&p).z <= 1e-6 {
                continue;
            }
            let u2 = project(&k, &pose, &p).unwrap();
            assert_relative_eq!(u.x, u2.x, epsilon = 1e-7);
            assert_relative_eq!(u.y, u2.y, epsilon = 1e-7);
        }
    }

    #[test]
    fn geodesic_distance_basics() {
        let i = Matrix3::identity();
        assert_relative_eq!(geodesic_rotation_distance(&i, &i), 0.0);
        let rz90 = *Rotation3::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2).matrix();
        assert_relative_eq!(geodesic_rotation_distance(&i, &rz90), 90.0, epsilon = 1e-9);
    }

    #[test]
    fn geodesic_distance_recovers_axis_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ));
            let theta = rng.gen::<f64>() * std::f64::consts::PI;
            let r = *Rotation3::from_axis_angle(&axis, theta).matrix();
            let d = geodesic_rotation_distance(&Matrix3::identity(), &r);
            assert_relative_eq!(d, theta.to_degrees(), epsilon = 1e-6);
        }
    }

    #[test]
    fn quaternion_wire_form_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let q = rotation_to_quat_wxyz(&r);
            assert!(q[0] >= 0.0);
            let r2 = quat_wxyz_to_rotation(&q);
            assert_relative_eq!((r - r2).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn pose_record_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pose = random_pose(&mut rng);
        let rec = PoseRecord::from_pose(4, &pose);
        let s = serde_json::to_string(&rec).unwrap();
        let back: PoseRecord = serde_json::from_str(&s).unwrap();
        let p2 = back.to_pose();
        assert_relative_eq!((pose.rotation - p2.rotation).norm(), 0.0, epsilon = 1e-9);
        assert_relative_eq!((pose.translation - p2.translation).norm(), 0.0, epsilon = 1e-12);
    }
}
