//! Rigid poses, cumulative cubic B-spline trajectories, pinhole projection
//! and planar homographies.
//!
//! Poses are camera-from-world throughout: `X_cam = R * X_world + t`.
//! Pixel centers sit at integer coordinates.

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum camera-frame depth accepted by [`project`].
pub const MIN_DEPTH: f64 = 1e-9;

/// Camera-from-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// `[w, x, y, z]`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let q = nalgebra::Quaternion::new(r.rotation[0], r.rotation[1], r.rotation[2], r.rotation[3]);
        Pose {
            rotation: UnitQuaternion::from_quaternion(q),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: p.translation.into(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
        .renormalized()
    }

    /// Camera-from-world pose of a camera centered at `center` (world frame)
    /// with camera-from-world rotation `rotation`.
    pub fn from_center(rotation: UnitQuaternion<f64>, center: Vector3<f64>) -> Self {
        Pose::new(rotation, -(rotation * center))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
        .renormalized()
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
        .renormalized()
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    fn renormalized(mut self) -> Self {
        self.rotation = UnitQuaternion::new_normalize(self.rotation.into_inner());
        self
    }
}

/// Pinhole intrinsics for a `width x height` sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Centered principal point and the given horizontal field of view.
    pub fn from_hfov(hfov_deg: f64, width: usize, height: usize) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) * 0.5,
            (height as f64 - 1.0) * 0.5,
            width,
            height,
        )
    }

    /// Intrinsics of a sensor with the same field of view and a different
    /// pixel grid. A target pixel integrates the source area
    /// `[i * r, (i + 1) * r)` with `r = src / dst`.
    pub fn rescaled(&self, width: usize, height: usize) -> CameraIntrinsics {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Camera-frame ray with unit z through pixel `x`.
    pub fn ray(&self, x: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((x.x - self.cx) / self.fx, (x.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, x: &Vector2<f64>) -> bool {
        x.x >= 0.0 && x.y >= 0.0 && x.x <= (self.width - 1) as f64 && x.y <= (self.height - 1) as f64
    }
}

/// Plane `normal . X = offset` in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PlaneRepr", into = "PlaneRepr")]
pub struct Plane {
    pub normal: Unit<Vector3<f64>>,
    pub offset: f64,
}

#[derive(Serialize, Deserialize)]
struct PlaneRepr {
    normal: [f64; 3],
    offset: f64,
}

impl From<PlaneRepr> for Plane {
    fn from(r: PlaneRepr) -> Self {
        Plane::new(Vector3::from(r.normal), r.offset)
    }
}

impl From<Plane> for PlaneRepr {
    fn from(p: Plane) -> Self {
        PlaneRepr {
            normal: p.normal.into_inner().into(),
            offset: p.offset,
        }
    }
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        Plane {
            normal: Unit::new_normalize(normal),
            offset,
        }
    }

    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// Point on the plane closest to the origin and two in-plane unit axes.
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let n = self.normal.into_inner();
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = (seed - n * n.dot(&seed)).normalize();
        let e2 = n.cross(&e1);
        (n * self.offset, e1, e2)
    }
}

/// Uniform cubic B-spline basis in cumulative form, `[B~1, B~2, B~3]` at `u`.
/// `B~0` is identically one.
pub fn cumulative_basis(u: f64) -> [f64; 3] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0,
        (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0,
        u3 / 6.0,
    ]
}

/// Derivative of [`cumulative_basis`] with respect to `u`.
pub fn cumulative_basis_du(u: f64) -> [f64; 3] {
    let u2 = u * u;
    [
        (3.0 - 6.0 * u + 3.0 * u2) / 6.0,
        (3.0 + 6.0 * u - 6.0 * u2) / 6.0,
        3.0 * u2 / 6.0,
    ]
}

/// Cubic cumulative B-spline over poses with uniform knots.
///
/// Control pose `k` sits at knot `t0 + k * knot_spacing`. Rotation follows
/// the cumulative product of quaternion exponentials; translation uses the
/// same cumulative basis on R^3 (so it is an ordinary cubic B-spline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeBSpline {
    pub control_poses: Vec<Pose>,
    pub t0: f64,
    pub knot_spacing: f64,
}

impl CumulativeBSpline {
    pub fn new(control_poses: Vec<Pose>, t0: f64, knot_spacing: f64) -> Result<Self> {
        if control_poses.len() < 4 {
            return Err(Error::Config(format!(
                "spline needs at least 4 control poses, got {}",
                control_poses.len()
            )));
        }
        if !(knot_spacing > 0.0) || !t0.is_finite() {
            return Err(Error::Config(format!("invalid knot spacing {knot_spacing}")));
        }
        Ok(CumulativeBSpline {
            control_poses,
            t0,
            knot_spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.control_poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_poses.is_empty()
    }

    /// Half-open valid sample interval `[start, end)`.
    pub fn domain(&self) -> (f64, f64) {
        let n = self.control_poses.len() as f64;
        (
            self.t0 + self.knot_spacing,
            self.t0 + (n - 2.0) * self.knot_spacing,
        )
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = self.domain();
        t >= a && t < b
    }

    /// Segment index `i` (control poses `i-1..=i+2`) and local parameter `u`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (start, end) = self.domain();
        if !(t >= start && t < end) {
            return Err(Error::OutOfDomain { t, start, end });
        }
        let s = (t - self.t0) / self.knot_spacing;
        let max_seg = self.control_poses.len() - 3;
        let i = (s.floor() as usize).clamp(1, max_seg);
        let u = (s - i as f64).clamp(0.0, 1.0);
        Ok((i, u))
    }

    pub fn sample(&self, t: f64) -> Result<Pose> {
        let (i, u) = self.locate(t)?;
        Ok(self.sample_segment(i, u))
    }

    fn sample_segment(&self, i: usize, u: f64) -> Pose {
        let b = cumulative_basis(u);
        let c = &self.control_poses[i - 1..i + 3];
        let mut q = c[0].rotation;
        let mut t = c[0].translation;
        for j in 1..4 {
            let delta = c[j - 1].rotation.inverse() * c[j].rotation;
            let omega = delta.scaled_axis() * b[j - 1];
            q = UnitQuaternion::new_normalize((q * UnitQuaternion::from_scaled_axis(omega)).into_inner());
            t += (c[j].translation - c[j - 1].translation) * b[j - 1];
        }
        Pose {
            rotation: q,
            translation: t,
        }
    }

    /// Index of the first control pose in the support of `t` and the weights
    /// of the four control translations: `translation(t) = sum_j w[j] * t_{first+j}`.
    pub fn translation_weights(&self, t: f64) -> Result<(usize, [f64; 4])> {
        let (i, u) = self.locate(t)?;
        let b = cumulative_basis(u);
        Ok((i - 1, [1.0 - b[0], b[0] - b[1], b[1] - b[2], b[2]]))
    }

    /// Jacobians of the sampled rotation with respect to left increments of
    /// the four control rotations in the support of `t`: perturbing control
    /// `first + j` by `exp(d)` moves `R(t)` to `exp(J[j] d) R(t)` to first order.
    pub fn rotation_jacobians(&self, t: f64) -> Result<(usize, [Matrix3<f64>; 4])> {
        let (i, u) = self.locate(t)?;
        let b = cumulative_basis(u);
        let c = &self.control_poses[i - 1..i + 3];
        let r: Vec<Matrix3<f64>> = c.iter().map(|p| p.rotation.to_rotation_matrix().into_inner()).collect();
        // term[k] (k = 1..3): b_k P_k Jr(b_k phi_k) Jr^-1(phi_k) R_k^T, with
        // P_k the partial product up to and including segment k.
        let mut q = c[0].rotation;
        let mut term = [Matrix3::zeros(); 4];
        for k in 1..4 {
            let phi = (c[k - 1].rotation.inverse() * c[k].rotation).scaled_axis();
            let bphi = phi * b[k - 1];
            q = UnitQuaternion::new_normalize((q * UnitQuaternion::from_scaled_axis(bphi)).into_inner());
            let p = q.to_rotation_matrix().into_inner();
            term[k] = p * so3_right_jacobian(&bphi) * so3_right_jacobian_inv(&phi) * r[k].transpose() * b[k - 1];
        }
        let mut jac = [Matrix3::zeros(); 4];
        jac[0] = Matrix3::identity();
        for m in 0..4 {
            if m >= 1 {
                jac[m] += term[m];
            }
            if m + 1 < 4 {
                jac[m] -= term[m + 1];
            }
        }
        Ok((i - 1, jac))
    }

    /// Analytic time derivative of the translation component.
    pub fn translation_velocity(&self, t: f64) -> Result<Vector3<f64>> {
        let (i, u) = self.locate(t)?;
        let db = cumulative_basis_du(u);
        let c = &self.control_poses[i - 1..i + 3];
        let mut v = Vector3::zeros();
        for j in 1..4 {
            v += (c[j].translation - c[j - 1].translation) * db[j - 1];
        }
        Ok(v / self.knot_spacing)
    }

    /// Angular velocity (left, camera frame) by central differences.
    pub fn angular_velocity(&self, t: f64) -> Result<Vector3<f64>> {
        const H: f64 = 1e-6;
        let (start, end) = self.domain();
        let a = (t - H).max(start);
        let b = (t + H).min(end - 1e-12);
        let ra = self.sample(a)?.rotation;
        let rb = self.sample(b)?.rotation;
        Ok((rb * ra.inverse()).scaled_axis() / (b - a))
    }

    /// Copy with every control pose mapped through `f`.
    pub fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> CumulativeBSpline {
        CumulativeBSpline {
            control_poses: self.control_poses.iter().map(f).collect(),
            t0: self.t0,
            knot_spacing: self.knot_spacing,
        }
    }
}

/// Pinhole projection of world point `x` into a camera with pose `pose`.
pub fn project(x: &Vector3<f64>, k: &CameraIntrinsics, pose: &Pose) -> Result<Vector2<f64>> {
    let xc = pose.transform_point(x);
    if xc.z <= MIN_DEPTH {
        return Err(Error::BehindCamera(xc.z));
    }
    Ok(Vector2::new(
        k.fx * xc.x / xc.z + k.cx,
        k.fy * xc.y / xc.z + k.cy,
    ))
}

/// World point seen at pixel `x` with camera-frame depth `depth`.
pub fn backproject(
    x: &Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    let xc = k.ray(x) * depth;
    Ok(pose.rotation.inverse() * (xc - pose.translation))
}

/// Camera-frame depth of the intersection of pixel `x`'s ray with `plane`.
pub fn plane_depth(x: &Vector2<f64>, k: &CameraIntrinsics, pose: &Pose, plane: &Plane) -> Result<f64> {
    let r_inv = pose.rotation.inverse();
    let origin = -(r_inv * pose.translation);
    let dir = r_inv * k.ray(x);
    let denom = plane.normal.dot(&dir);
    if denom.abs() <= 1e-12 {
        return Err(Error::NoIntersection);
    }
    let depth = (plane.offset - plane.normal.dot(&origin)) / denom;
    if depth <= 0.0 {
        return Err(Error::BehindCamera(depth));
    }
    Ok(depth)
}

/// Homography taking plane coordinates `(a, b, 1)` (meters along the axes
/// from [`Plane::basis`], or along caller-supplied axes) to pixels.
pub fn plane_to_image(
    k: &CameraIntrinsics,
    pose: &Pose,
    origin: &Vector3<f64>,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
) -> Matrix3<f64> {
    let r = pose.rotation_matrix();
    let mut m = Matrix3::zeros();
    m.set_column(0, &(r * e1));
    m.set_column(1, &(r * e2));
    m.set_column(2, &(r * origin + pose.translation));
    k.matrix() * m
}

/// Homography mapping homogeneous destination pixels to source pixels
/// through `plane`, normalized so that `H[(2, 2)] = 1` when nonzero.
pub fn planar_homography(
    k_src: &CameraIntrinsics,
    pose_src: &Pose,
    k_dst: &CameraIntrinsics,
    pose_dst: &Pose,
    plane: &Plane,
) -> Result<Matrix3<f64>> {
    let (o, e1, e2) = plane.basis();
    for pose in [pose_src, pose_dst] {
        if plane.signed_distance(&pose.center()).abs() < 1e-12 {
            return Err(Error::SingularHomography);
        }
    }
    if plane.signed_distance(&pose_src.center()).signum()
        != plane.signed_distance(&pose_dst.center()).signum()
    {
        return Err(Error::SingularHomography);
    }
    let h_src = plane_to_image(k_src, pose_src, &o, &e1, &e2);
    let h_dst = plane_to_image(k_dst, pose_dst, &o, &e1, &e2);
    let scale = h_dst.norm();
    let inv = (h_dst / scale)
        .try_inverse()
        .ok_or(Error::SingularHomography)?
        / scale;
    let h = h_src * inv;
    if !h.iter().all(|v| v.is_finite()) || h.determinant().abs() < 1e-300 {
        return Err(Error::SingularHomography);
    }
    Ok(normalize_homography(h))
}

pub fn normalize_homography(h: Matrix3<f64>) -> Matrix3<f64> {
    let s = h[(2, 2)];
    if s.abs() > 1e-300 {
        h / s
    } else {
        h
    }
}

pub fn apply_homography(h: &Matrix3<f64>, x: &Vector2<f64>) -> Option<Vector2<f64>> {
    let p = h * Vector3::new(x.x, x.y, 1.0);
    if p.z.abs() < 1e-300 {
        None
    } else {
        Some(Vector2::new(p.x / p.z, p.y / p.z))
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of the SO(3) exponential:
/// `exp(phi + d) = exp(phi) exp(Jr(phi) d)` to first order.
pub fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = skew(phi);
    let (a, b) = if th < 1e-5 {
        (0.5 - th * th / 24.0, 1.0 / 6.0 - th * th / 120.0)
    } else {
        ((1.0 - th.cos()) / (th * th), (th - th.sin()) / (th * th * th))
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Inverse of [`so3_right_jacobian`].
pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = skew(phi);
    let c = if th < 1e-5 {
        1.0 / 12.0 + th * th / 720.0
    } else {
        1.0 / (th * th) - (1.0 + th.cos()) / (2.0 * th * th.sin())
    };
    Matrix3::identity() + k * 0.5 + k * k * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap()
    }

    fn random_pose(rng: &mut impl Rng, rot: f64, trans: f64) -> Pose {
        let w = Vector3::new(rng.gen_range(-rot..rot), rng.gen_range(-rot..rot), rng.gen_range(-rot..rot));
        let t = Vector3::new(
            rng.gen_range(-trans..trans),
            rng.gen_range(-trans..trans),
            rng.gen_range(-trans..trans),
        );
        Pose::new(UnitQuaternion::from_scaled_axis(w), t)
    }

    fn random_spline(rng: &mut impl Rng, n: usize) -> CumulativeBSpline {
        let poses = (0..n).map(|_| random_pose(rng, 0.3, 1.0)).collect();
        CumulativeBSpline::new(poses, 0.25, 0.1).unwrap()
    }

    /// Scalar uniform cubic B-spline, evaluated from the non-cumulative
    /// matrix form.
    fn scalar_bspline(p: [f64; 4], u: f64) -> f64 {
        let b0 = (1.0 - u).powi(3) / 6.0;
        let b1 = (3.0 * u.powi(3) - 6.0 * u * u + 4.0) / 6.0;
        let b2 = (-3.0 * u.powi(3) + 3.0 * u * u + 3.0 * u + 1.0) / 6.0;
        let b3 = u.powi(3) / 6.0;
        b0 * p[0] + b1 * p[1] + b2 * p[2] + b3 * p[3]
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = random_pose(&mut rng, 3.0, 10.0);
            let i = p.compose(&p.inverse());
            assert!(i.rotation.angle() < 1e-9);
            assert!(i.translation.norm() < 1e-9);
            assert!((i.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn project_examples() {
        let k = k100();
        let id = Pose::identity();
        let x = project(&Vector3::new(0.0, 0.0, 1.0), &k, &id).unwrap();
        assert_eq!(x, Vector2::new(64.0, 64.0));
        let x = project(&Vector3::new(0.1, 0.0, 1.0), &k, &id).unwrap();
        assert_relative_eq!(x, Vector2::new(74.0, 64.0), epsilon = 1e-12);
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k, &id),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn backproject_examples() {
        let k = k100();
        let x = backproject(&Vector2::new(64.0, 64.0), 2.0, &k, &Pose::identity()).unwrap();
        assert_relative_eq!(x, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
        assert!(matches!(
            backproject(&Vector2::new(1.0, 1.0), 0.0, &k, &Pose::identity()),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn project_backproject_round_trip() {
        let k = k100();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 1.0, 2.0);
            let x = Vector2::new(rng.gen_range(0.0..128.0), rng.gen_range(0.0..128.0));
            let z = rng.gen_range(0.1..20.0);
            let xw = backproject(&x, z, &k, &pose).unwrap();
            let x2 = project(&xw, &k, &pose).unwrap();
            assert!((x2 - x).norm() < 1e-9);
        }
    }

    #[test]
    fn plane_depth_front_parallel() {
        let k = k100();
        let plane = Plane::new(Vector3::z(), 0.4);
        let id = Pose::identity();
        assert_relative_eq!(plane_depth(&Vector2::new(64.0, 64.0), &k, &id, &plane).unwrap(), 0.4);
        assert_relative_eq!(
            plane_depth(&Vector2::new(3.0, 120.0), &k, &id, &plane).unwrap(),
            0.4,
            epsilon = 1e-15
        );
        let behind = Plane::new(Vector3::z(), -1.0);
        assert!(matches!(
            plane_depth(&Vector2::new(64.0, 64.0), &k, &id, &behind),
            Err(Error::BehindCamera(_))
        ));
        let parallel = Plane::new(Vector3::x(), 1.0);
        assert!(matches!(
            plane_depth(&Vector2::new(64.0, 64.0), &k, &id, &parallel),
            Err(Error::NoIntersection)
        ));
    }

    /// March along the ray until the plane is crossed, then bisect.
    fn ray_march_depth(x: &Vector2<f64>, k: &CameraIntrinsics, pose: &Pose, plane: &Plane) -> f64 {
        let point = |z: f64| backproject(x, z, k, pose).unwrap();
        let f = |z: f64| plane.signed_distance(&point(z));
        let step = 1e-3;
        let mut a = step;
        let s0 = f(a).signum();
        let mut b = a + step;
        while f(b).signum() == s0 {
            a = b;
            b += step;
            assert!(b < 100.0);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m).signum() == s0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn plane_depth_rotated_camera_matches_ray_march() {
        let k = k100();
        let plane = Plane::new(Vector3::z(), 0.4);
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * 30f64.to_radians()),
            Vector3::zeros(),
        );
        for x in [Vector2::new(64.0, 64.0), Vector2::new(10.0, 100.0), Vector2::new(120.0, 5.0)] {
            let d = plane_depth(&x, &k, &pose, &plane).unwrap();
            let oracle = ray_march_depth(&x, &k, &pose, &plane);
            assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
        }
    }

    #[test]
    fn backprojected_plane_depth_lies_on_plane() {
        let k = k100();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let plane = Plane::new(Vector3::new(0.1, -0.2, 1.0), 3.0);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 0.2, 0.5);
            let x = Vector2::new(rng.gen_range(0.0..128.0), rng.gen_range(0.0..128.0));
            let z = plane_depth(&x, &k, &pose, &plane).unwrap();
            let xw = backproject(&x, z, &k, &pose).unwrap();
            assert!(plane.signed_distance(&xw).abs() < 1e-9);
        }
    }

    #[test]
    fn homography_identity_and_inverse() {
        let k = k100();
        let plane = Plane::new(Vector3::z(), 2.0);
        let p = Pose::identity();
        let h = planar_homography(&k, &p, &k, &p, &plane).unwrap();
        assert!((h - Matrix3::identity()).norm() < 1e-12);

        let q = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.05, -0.1, 0.02)),
            Vector3::new(0.2, -0.1, 0.3),
        );
        let h_ab = planar_homography(&k, &p, &k, &q, &plane).unwrap();
        let h_ba = planar_homography(&k, &q, &k, &p, &plane).unwrap();
        let prod = normalize_homography(h_ab * h_ba);
        assert!((prod - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn homography_translation_offset() {
        let k = k100();
        let d = 2.0;
        let b = 0.1;
        let plane = Plane::new(Vector3::z(), d);
        let src = Pose::identity();
        // Camera moved by +b along x: camera-from-world translation is -b.
        let dst = Pose::from_center(UnitQuaternion::identity(), Vector3::new(b, 0.0, 0.0));
        let h = planar_homography(&k, &src, &k, &dst, &plane).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = Vector2::new(rng.gen_range(0.0..128.0), rng.gen_range(0.0..128.0));
            let mapped = apply_homography(&h, &x).unwrap();
            let z = plane_depth(&x, &k, &dst, &plane).unwrap();
            let oracle = project(&backproject(&x, z, &k, &dst).unwrap(), &k, &src).unwrap();
            assert!((mapped - oracle).norm() < 1e-9);
            assert!((mapped.x - x.x - k.fx * b / d).abs() < 1e-9);
        }
    }

    #[test]
    fn homography_rejects_opposite_sides() {
        let k = k100();
        let plane = Plane::new(Vector3::z(), 1.0);
        let a = Pose::identity();
        let b = Pose::from_center(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 2.0));
        assert!(matches!(
            planar_homography(&k, &a, &k, &b, &plane),
            Err(Error::SingularHomography)
        ));
    }

    #[test]
    fn spline_identity_controls() {
        let s = CumulativeBSpline::new(vec![Pose::identity(); 6], 0.0, 0.5).unwrap();
        for t in [0.5, 0.77, 1.2, 1.99] {
            let p = s.sample(t).unwrap();
            assert_eq!(p.rotation, UnitQuaternion::identity());
            assert_eq!(p.translation, Vector3::zeros());
        }
    }

    #[test]
    fn spline_constant_controls_reproduce_pose() {
        let p = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.2, 0.1)),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let s = CumulativeBSpline::new(vec![p; 5], 0.0, 1.0).unwrap();
        let q = s.sample(1.3).unwrap();
        assert!((q.rotation.angle_to(&p.rotation)) < 1e-12);
        assert!((q.translation - p.translation).norm() < 1e-12);
    }

    #[test]
    fn spline_translation_matches_scalar_bspline() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let poses = xs
            .iter()
            .map(|&x| Pose::new(UnitQuaternion::identity(), Vector3::new(x, 0.0, 0.0)))
            .collect();
        let s = CumulativeBSpline::new(poses, 0.0, 1.0).unwrap();
        assert_eq!(s.domain(), (1.0, 2.0));
        for u in [0.0, 0.25, 0.5, 0.9] {
            let p = s.sample(1.0 + u).unwrap();
            assert!((p.translation.x - scalar_bspline(xs, u)).abs() < 1e-14);
        }
        assert!((s.sample(1.0).unwrap().translation.x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spline_domain_errors() {
        let s = CumulativeBSpline::new(vec![Pose::identity(); 5], 0.0, 1.0).unwrap();
        assert!(matches!(s.sample(0.99), Err(Error::OutOfDomain { start, end, .. }) if start == 1.0 && end == 3.0));
        assert!(s.sample(3.0).is_err());
        assert!(CumulativeBSpline::new(vec![Pose::identity(); 3], 0.0, 1.0).is_err());
        assert!(CumulativeBSpline::new(vec![Pose::identity(); 4], 0.0, 0.0).is_err());
    }

    #[test]
    fn spline_velocity_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spline(&mut rng, 9);
        let (a, b) = s.domain();
        let h = 1e-5;
        for _ in 0..10 {
            let t = rng.gen_range(a + 2.0 * h..b - 2.0 * h);
            let v = s.translation_velocity(t).unwrap();
            let fd = (s.sample(t + h).unwrap().translation - s.sample(t - h).unwrap().translation) / (2.0 * h);
            assert!((v - fd).norm() <= 1e-6 * fd.norm().max(1e-3), "{v} vs {fd}");
        }
    }

    #[test]
    fn spline_translation_weights_reproduce_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_spline(&mut rng, 8);
        let (a, b) = s.domain();
        for _ in 0..20 {
            let t = rng.gen_range(a..b);
            let (first, w) = s.translation_weights(t).unwrap();
            let sum: Vector3<f64> = (0..4).map(|j| s.control_poses[first + j].translation * w[j]).sum();
            assert!((sum - s.sample(t).unwrap().translation).norm() < 1e-12);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn right_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let phi = Vector3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let jr = so3_right_jacobian(&phi);
            assert!((jr * so3_right_jacobian_inv(&phi) - Matrix3::identity()).norm() < 1e-12);
            let base = UnitQuaternion::from_scaled_axis(phi);
            for a in 0..3 {
                let mut d = Vector3::zeros();
                d[a] = 1e-6;
                let num = (base.inverse() * UnitQuaternion::from_scaled_axis(phi + d)).scaled_axis() / 1e-6;
                assert!((num - jr.column(a)).norm() < 1e-5);
            }
        }
        let tiny = Vector3::new(1e-7, -2e-7, 3e-8);
        assert!((so3_right_jacobian(&tiny) - Matrix3::identity()).norm() < 1e-6);
    }

    #[test]
    fn rotation_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_spline(&mut rng, 8);
        let (lo, hi) = s.domain();
        for _ in 0..20 {
            let t = rng.gen_range(lo..hi);
            let (first, jac) = s.rotation_jacobians(t).unwrap();
            let r = s.sample(t).unwrap().rotation;
            for (j, jj) in jac.iter().enumerate() {
                for a in 0..3 {
                    let mut d = Vector3::zeros();
                    d[a] = 1e-6;
                    let moved = |sign: f64| {
                        let mut m = s.clone();
                        let p = &mut m.control_poses[first + j];
                        p.rotation = UnitQuaternion::from_scaled_axis(d * sign) * p.rotation;
                        (m.sample(t).unwrap().rotation * r.inverse()).scaled_axis()
                    };
                    let num = (moved(1.0) - moved(-1.0)) / 2e-6;
                    assert!((num - jj.column(a)).norm() < 1e-6, "control {j} axis {a}");
                }
            }
        }
        // With one shared rotation the Jacobians reduce to the basis weights.
        let q = UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.2, 0.1));
        let flat = s.map_poses(|p| Pose::new(q, p.translation));
        let t = 0.5 * (lo + hi);
        let (_, jac) = flat.rotation_jacobians(t).unwrap();
        let (_, w) = flat.translation_weights(t).unwrap();
        for j in 0..4 {
            assert!((jac[j] - Matrix3::identity() * w[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn spline_is_continuous_across_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_spline(&mut rng, 8);
        for k in 2..(s.len() - 2) {
            let tk = s.t0 + k as f64 * s.knot_spacing;
            let (lo, hi) = (tk - 1e-10, tk + 1e-10);
            let (pl, ph) = (s.sample(lo).unwrap(), s.sample(hi).unwrap());
            assert!((pl.translation - ph.translation).norm() < 1e-6);
            assert!(pl.rotation.angle_to(&ph.rotation) < 1e-6);
            let (vl, vh) = (
                s.translation_velocity(tk - 1e-10).unwrap(),
                s.translation_velocity(tk + 1e-10).unwrap(),
            );
            assert!((vl - vh).norm() < 1e-6);
            let (wl, wh) = (s.angular_velocity(lo).unwrap(), s.angular_velocity(hi).unwrap());
            assert!((wl - wh).norm() < 1e-4);
        }
    }

    #[test]
    fn spline_locality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_spline(&mut rng, 10);
        let i = 5;
        let mut s2 = s.clone();
        s2.control_poses[i] = random_pose(&mut rng, 0.5, 1.0);
        let (a, b) = s.domain();
        let mut t = a;
        while t < b {
            let knot = (t - s.t0) / s.knot_spacing;
            let differs = {
                let p = s.sample(t).unwrap();
                let q = s2.sample(t).unwrap();
                (p.translation - q.translation).norm() > 1e-12 || p.rotation.angle_to(&q.rotation) > 1e-12
            };
            // Control pose i influences knots (i-2, i+2).
            let inside = knot > (i as f64 - 2.0) && knot < (i as f64 + 2.0);
            if !inside {
                assert!(!differs, "t={t} knot={knot}");
            }
            t += 0.0037;
        }
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.2, 0.3)),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let s = serde_json::to_string(&p).unwrap();
        let q: Pose = serde_json::from_str(&s).unwrap();
        assert!(p.rotation.angle_to(&q.rotation) < 1e-15);
        assert_eq!(p.translation, q.translation);
    }
}
