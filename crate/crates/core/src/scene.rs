//! Textured planar scenes rendered through a pinhole camera moving along
//! a continuous-time trajectory.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind, IRRADIANCE_FLOOR};
use crate::geometry::{
    backproject, plane_depth, plane_to_image, project, CameraIntrinsics, CumulativeBSpline, Plane, Pose,
};
use crate::io::GrayImage;
use crate::par;
use crate::textures::{self, TextureKind};

/// A plane carrying an irradiance texture. Texel `(i, j)` sits at
/// `origin + i * texel_u * e1 + j * texel_v * e2` with `e1, e2` from
/// [`Plane::basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateScene {
    pub name: String,
    pub tex_width: usize,
    pub tex_height: usize,
    pub texture: Vec<f32>,
    pub physical_width: f64,
    pub physical_height: f64,
    pub plane: Plane,
    pub origin: Vector3<f64>,
}

impl TemplateScene {
    /// Scene from raw irradiance values, floored at [`IRRADIANCE_FLOOR`].
    pub fn from_irradiance(
        name: &str,
        tex_width: usize,
        tex_height: usize,
        irradiance: &[f64],
        physical_width: f64,
        physical_height: f64,
        plane: Plane,
        origin: Vector3<f64>,
    ) -> Result<Self> {
        if tex_width < 2 || tex_height < 2 || irradiance.len() != tex_width * tex_height {
            return Err(Error::Dimension(format!(
                "{} texels for a {tex_width}x{tex_height} texture",
                irradiance.len()
            )));
        }
        if !(physical_width > 0.0 && physical_height > 0.0) {
            return Err(Error::Config("texture physical size must be positive".into()));
        }
        if irradiance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("texture contains non-finite irradiance".into()));
        }
        Ok(TemplateScene {
            name: name.to_string(),
            tex_width,
            tex_height,
            texture: irradiance.iter().map(|&v| v.clamp(IRRADIANCE_FLOOR, 1.0) as f32).collect(),
            physical_width,
            physical_height,
            plane,
            origin,
        })
    }

    /// Scene from an 8-bit image, irradiance `max(g / 255, floor)`.
    pub fn from_gray(
        name: &str,
        img: &GrayImage,
        physical_width: f64,
        physical_height: f64,
        plane: Plane,
        origin: Vector3<f64>,
    ) -> Result<Self> {
        let e: Vec<f64> = img.data.iter().map(|&g| g as f64 / 255.0).collect();
        Self::from_irradiance(name, img.width, img.height, &e, physical_width, physical_height, plane, origin)
    }

    pub fn texel_size(&self) -> (f64, f64) {
        (
            self.physical_width / self.tex_width as f64,
            self.physical_height / self.tex_height as f64,
        )
    }

    /// Natural-log dynamic range of the texture.
    pub fn log_range(&self) -> f64 {
        let (lo, hi) = self
            .texture
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let r = (hi as f64).ln() - (lo as f64).ln();
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    #[inline]
    fn sample(&self, u: f64, v: f64) -> f64 {
        let w = self.tex_width;
        let umax = (w - 1) as f64;
        let vmax = (self.tex_height - 1) as f64;
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, umax) };
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, vmax) };
        let u0 = (u as usize).min(w - 2);
        let v0 = (v as usize).min(self.tex_height - 2);
        let au = u - u0 as f64;
        let av = v - v0 as f64;
        let i = v0 * w + u0;
        let t = &self.texture;
        let top = t[i] as f64 + au * (t[i + 1] as f64 - t[i] as f64);
        let bot = t[i + w] as f64 + au * (t[i + w + 1] as f64 - t[i + w] as f64);
        top + av * (bot - top)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub base_width: usize,
    pub base_height: usize,
    /// Dense sampling rate in Hz at speed scale one.
    pub frame_rate: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            base_width: 1280,
            base_height: 1280,
            frame_rate: 5000.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.base_height == 0 {
            return Err(Error::Config("base resolution must be non-zero".into()));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("invalid frame rate {}", self.frame_rate)));
        }
        Ok(())
    }
}

/// Irradiance image of `scene` seen from `pose` at time `t`.
pub fn render_frame(scene: &TemplateScene, k: &CameraIntrinsics, pose: &Pose, t: f64) -> Result<Frame> {
    k.validate()?;
    let (w, h) = (k.width as f64, k.height as f64);
    for corner in [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)] {
        plane_depth(&Vector2::new(corner.0, corner.1), k, pose, &scene.plane)
            .map_err(|e| Error::Render(format!("frustum corner misses the plane: {e}")))?;
    }
    let (_, e1, e2) = scene.plane.basis();
    let (su, sv) = scene.texel_size();
    let img_from_tex = plane_to_image(k, pose, &scene.origin, &(e1 * su), &(e2 * sv));
    let scale = img_from_tex.norm();
    let m = (img_from_tex / scale)
        .try_inverse()
        .ok_or_else(|| Error::Render("degenerate view of the plane".into()))?;
    let mut data = vec![0.0; k.width * k.height];
    par::for_each_row(&mut data, k.width, |y, row| {
        let yf = y as f64;
        let (bu, bv, bw) = (
            m[(0, 1)] * yf + m[(0, 2)],
            m[(1, 1)] * yf + m[(1, 2)],
            m[(2, 1)] * yf + m[(2, 2)],
        );
        for (x, out) in row.iter_mut().enumerate() {
            let xf = x as f64;
            let d = m[(2, 0)] * xf + bw;
            let u = (m[(0, 0)] * xf + bu) / d;
            let v = (m[(1, 0)] * xf + bv) / d;
            *out = scene.sample(u, v).max(IRRADIANCE_FLOOR);
        }
    });
    Frame::new(k.width, k.height, t, FrameKind::Irradiance, data)
}

/// Frames at `t_start + k / frame_rate` up to and including `t_end`.
pub fn render_sequence(
    scene: &TemplateScene,
    k: &CameraIntrinsics,
    spline: &CumulativeBSpline,
    t_start: f64,
    t_end: f64,
    frame_rate: f64,
) -> Result<Vec<Frame>> {
    let times = frame_times(t_start, t_end, frame_rate)?;
    for &t in [times[0], *times.last().unwrap()].iter() {
        if !spline.contains(t) {
            let (start, end) = spline.domain();
            return Err(Error::OutOfDomain { t, start, end });
        }
    }
    par::map(&times, |&t| render_frame(scene, k, &spline.sample(t)?, t))
        .into_iter()
        .collect()
}

/// Sample times of a sequence; `floor((t_end - t_start) * rate) + 1` of them.
pub fn frame_times(t_start: f64, t_end: f64, frame_rate: f64) -> Result<Vec<f64>> {
    if !(frame_rate > 0.0) || !(t_end >= t_start) {
        return Err(Error::Config(format!(
            "invalid sequence [{t_start}, {t_end}] at {frame_rate} Hz"
        )));
    }
    let n = ((t_end - t_start) * frame_rate + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| t_start + i as f64 / frame_rate).collect())
}

/// Image displacement of the scene point under pixel `x` between `t` and `t + dt`.
pub fn gt_flow(
    scene: &TemplateScene,
    k: &CameraIntrinsics,
    spline: &CumulativeBSpline,
    x: &Vector2<f64>,
    t: f64,
    dt: f64,
) -> Result<Vector2<f64>> {
    let p0 = spline.sample(t)?;
    let p1 = spline.sample(t + dt)?;
    let depth = plane_depth(x, k, &p0, &scene.plane)?;
    let world = backproject(x, depth, k, &p0)?;
    if dt == 0.0 {
        return Ok(Vector2::zeros());
    }
    let x1 = project(&world, k, &p1).map_err(|_| Error::OutOfView)?;
    if !k.contains(&x1) {
        return Err(Error::OutOfView);
    }
    Ok(x1 - x)
}

/// The same path traversed `s` times faster: `T_s(t0 + (t - t0) / s) = T(t)`.
pub fn speed_scale(spline: &CumulativeBSpline, s: f64) -> Result<CumulativeBSpline> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidScale(s));
    }
    CumulativeBSpline::new(spline.control_poses.clone(), spline.t0, spline.knot_spacing / s)
}

/// A bundled scene: texture plane, camera trajectory and field of view.
#[derive(Debug, Clone)]
pub struct SceneSetup {
    pub scene: TemplateScene,
    pub trajectory: CumulativeBSpline,
    pub hfov_deg: f64,
}

impl SceneSetup {
    pub fn intrinsics(&self, width: usize, height: usize) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_hfov(self.hfov_deg, width, height)
    }
}

pub const BUNDLED_SCENES: [&str; 3] = ["rocks", "carpet", "tiles"];

/// Distance from the trajectory to the textured plane, meters.
pub const BUNDLED_PLANE_DEPTH: f64 = 50.0;
pub const BUNDLED_HFOV_DEG: f64 = 65.0;
pub const BUNDLED_TEXTURE_SIZE: usize = 2048;
pub const BUNDLED_TEXTURE_EXTENT: f64 = 110.0;
pub const BUNDLED_DURATION: f64 = 12.0;
const BUNDLED_KNOT_SPACING: f64 = 0.05;

struct PathParams {
    phase: f64,
    wobble: [f64; 3],
    seed: u64,
}

fn path_params(kind: TextureKind) -> PathParams {
    match kind {
        TextureKind::Rocks => PathParams {
            phase: 0.0,
            wobble: [0.8, 0.6, 0.5],
            seed: 11,
        },
        TextureKind::Carpet => PathParams {
            phase: 2.1,
            wobble: [0.5, 0.9, 0.4],
            seed: 23,
        },
        TextureKind::Tiles => PathParams {
            phase: 4.2,
            wobble: [1.0, 0.5, 0.6],
            seed: 37,
        },
    }
}

/// Camera pose of the bundled loop at time `t`: a roughly 10 m/s circle of
/// radius 15 m with harmonic wobble, small height changes and a few
/// degrees of rotation, looking at the plane `z = 50`.
fn bundled_pose(p: &PathParams, t: f64) -> Pose {
    const RADIUS: f64 = 15.0;
    const OMEGA: f64 = 10.0 / RADIUS;
    let a = OMEGA * t + p.phase;
    let center = Vector3::new(
        RADIUS * a.cos() + p.wobble[0] * (3.0 * a).cos(),
        RADIUS * a.sin() + p.wobble[1] * (2.0 * a).sin(),
        p.wobble[2] * (1.3 * t + p.phase).sin(),
    );
    let rot = UnitQuaternion::from_scaled_axis(Vector3::new(
        0.03 * (0.9 * t + p.phase).sin(),
        0.03 * (1.1 * t + 0.5 * p.phase).cos(),
        0.05 * (0.7 * t).sin(),
    ));
    Pose::from_center(rot, center)
}

/// One of [`BUNDLED_SCENES`], with a trajectory whose domain starts at 0 s.
pub fn bundled_scene(name: &str) -> Result<SceneSetup> {
    bundled_scene_with_size(name, BUNDLED_TEXTURE_SIZE)
}

pub fn bundled_scene_with_size(name: &str, texture_size: usize) -> Result<SceneSetup> {
    let kind = TextureKind::from_name(name)?;
    let p = path_params(kind);
    let img = textures::generate(kind, texture_size, p.seed)?;
    let extent = BUNDLED_TEXTURE_EXTENT;
    let plane = Plane::new(Vector3::z(), BUNDLED_PLANE_DEPTH);
    let (_, e1, e2) = plane.basis();
    let origin = Vector3::new(0.0, 0.0, BUNDLED_PLANE_DEPTH) - (e1 + e2) * (extent / 2.0);
    let scene = TemplateScene::from_gray(name, &img, extent, extent, plane, origin)?;
    let dt = BUNDLED_KNOT_SPACING;
    let n = (BUNDLED_DURATION / dt).ceil() as usize + 3;
    let poses = (0..n).map(|j| bundled_pose(&p, (j as f64 - 1.0) * dt)).collect();
    let trajectory = CumulativeBSpline::new(poses, -dt, dt)?;
    Ok(SceneSetup {
        scene,
        trajectory,
        hfov_deg: BUNDLED_HFOV_DEG,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(w: usize, h: usize, seed: u64, texel: f64, depth: f64) -> TemplateScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.05..1.0)).collect();
        let plane = Plane::new(Vector3::z(), depth);
        TemplateScene::from_irradiance("random", w, h, &e, w as f64 * texel, h as f64 * texel, plane, Vector3::new(0.0, 0.0, depth))
            .unwrap()
    }

    /// Camera whose image grid coincides with the texel grid.
    fn aligned_camera(w: usize, h: usize, texel: f64, depth: f64) -> (CameraIntrinsics, Pose) {
        let f = depth / texel;
        let k = CameraIntrinsics::new(f, f, 0.0, 0.0, w, h).unwrap();
        (k, Pose::identity())
    }

    #[test]
    fn uniform_texture_renders_uniform() {
        let plane = Plane::new(Vector3::z(), 2.0);
        let s = TemplateScene::from_irradiance("flat", 4, 4, &[0.5; 16], 10.0, 10.0, plane, Vector3::new(-5.0, -5.0, 2.0))
            .unwrap();
        let k = CameraIntrinsics::from_hfov(60.0, 32, 24).unwrap();
        let pose = Pose::new(UnitQuaternion::from_euler_angles(0.1, -0.05, 0.3), Vector3::new(0.2, -0.1, 0.3));
        let f = render_frame(&s, &k, &pose, 0.0).unwrap();
        assert!(f.data.iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn identity_homography_reproduces_texture() {
        let (w, h, texel, depth) = (40, 30, 0.01, 2.0);
        let s = random_scene(w, h, 1, texel, depth);
        let (k, pose) = aligned_camera(w, h, texel, depth);
        let f = render_frame(&s, &k, &pose, 0.0).unwrap();
        for (a, b) in f.data.iter().zip(&s.texture) {
            assert!((a - *b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_translation_shifts_the_frame() {
        let (w, h, texel, depth) = (64, 48, 0.01, 2.0);
        let s = random_scene(w, h, 2, texel, depth);
        let (k, pose) = aligned_camera(48, 32, texel, depth);
        let shifted = Pose::from_center(UnitQuaternion::identity(), Vector3::new(3.0 * texel, 0.0, 0.0));
        let a = render_frame(&s, &k, &pose, 0.0).unwrap();
        let b = render_frame(&s, &k, &shifted, 0.0).unwrap();
        let mut diff = 0.0;
        let mut n = 0;
        for y in 0..k.height {
            for x in 0..k.width - 3 {
                diff += (b.get(x, y) - a.get(x + 3, y)).abs();
                n += 1;
            }
        }
        assert!(diff / (n as f64) < 1e-9);
    }

    #[test]
    fn render_rejects_cameras_not_facing_the_plane() {
        let s = random_scene(8, 8, 3, 0.1, 2.0);
        let k = CameraIntrinsics::from_hfov(60.0, 16, 16).unwrap();
        let away = Pose::new(UnitQuaternion::from_euler_angles(std::f64::consts::PI, 0.0, 0.0), Vector3::zeros());
        assert!(matches!(render_frame(&s, &k, &away, 0.0), Err(Error::Render(_))));
        let grazing = Pose::new(UnitQuaternion::from_euler_angles(1.4, 0.0, 0.0), Vector3::zeros());
        assert!(matches!(render_frame(&s, &k, &grazing, 0.0), Err(Error::Render(_))));
    }

    fn translation_spline(seed: u64) -> CumulativeBSpline {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = (0..8)
            .map(|_| {
                Pose::from_center(
                    UnitQuaternion::identity(),
                    Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
                )
            })
            .collect();
        CumulativeBSpline::new(poses, 0.0, 0.01).unwrap()
    }

    #[test]
    fn static_spline_gives_identical_frames() {
        let s = random_scene(32, 32, 4, 0.05, 2.0);
        let k = CameraIntrinsics::from_hfov(40.0, 16, 16).unwrap();
        let pose = Pose::from_center(UnitQuaternion::identity(), Vector3::new(0.8, 0.8, 0.0));
        let spline = CumulativeBSpline::new(vec![pose; 6], 0.0, 0.1).unwrap();
        let frames = render_sequence(&s, &k, &spline, 0.1, 0.3, 100.0).unwrap();
        assert_eq!(frames.len(), ((0.3f64 - 0.1) * 100.0).floor() as usize + 1);
        assert!(frames.iter().all(|f| f.data == frames[0].data));
        assert!(frames.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
    }

    #[test]
    fn reversed_trajectory_reverses_frames() {
        let s = random_scene(64, 64, 5, 0.05, 2.0);
        let k = CameraIntrinsics::from_hfov(40.0, 16, 16).unwrap();
        let spline = translation_spline(6).map_poses(|p| {
            Pose::from_center(p.rotation, p.center() + Vector3::new(1.6, 1.6, 0.0))
        });
        let n = spline.len();
        let mut rev_poses = spline.control_poses.clone();
        rev_poses.reverse();
        let rev = CumulativeBSpline::new(rev_poses, spline.t0, spline.knot_spacing).unwrap();
        let mirror = 2.0 * spline.t0 + (n as f64 - 1.0) * spline.knot_spacing;
        let (t_a, t_b, rate) = (0.0125, 0.0525, 1000.0);
        let fwd = render_sequence(&s, &k, &spline, t_a, t_b, rate).unwrap();
        let bwd = render_sequence(&s, &k, &rev, mirror - t_b, mirror - t_a, rate).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        for (f, b) in fwd.iter().zip(bwd.iter().rev()) {
            for (x, y) in f.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn flow_fixture() -> (TemplateScene, CameraIntrinsics, CumulativeBSpline) {
        let s = random_scene(64, 64, 7, 0.1, 3.0);
        let k = CameraIntrinsics::from_hfov(50.0, 64, 48).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let poses = (0..8)
            .map(|_| {
                let rot = UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.05..0.05),
                ));
                let c = Vector3::new(3.2, 3.2, 0.0)
                    + Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
                Pose::from_center(rot, c)
            })
            .collect();
        (s, k, CumulativeBSpline::new(poses, 0.0, 0.1).unwrap())
    }

    #[test]
    fn flow_zero_interval() {
        let (s, k, spline) = flow_fixture();
        let f = gt_flow(&s, &k, &spline, &Vector2::new(20.0, 20.0), 0.3, 0.0).unwrap();
        assert_eq!(f, Vector2::zeros());
    }

    #[test]
    fn flow_of_lateral_translation() {
        let (s, _, _) = flow_fixture();
        let k = CameraIntrinsics::from_hfov(50.0, 64, 48).unwrap();
        let v = 0.7;
        let poses = (0..6)
            .map(|j| Pose::from_center(UnitQuaternion::identity(), Vector3::new(3.2 + v * 0.1 * j as f64, 3.2, 0.0)))
            .collect();
        let spline = CumulativeBSpline::new(poses, 0.0, 0.1).unwrap();
        let dt = 0.02;
        let f = gt_flow(&s, &k, &spline, &Vector2::new(30.0, 20.0), 0.2, dt).unwrap();
        assert!((f.x - (-k.fx * v * dt / 3.0)).abs() < 1e-9);
        assert!(f.y.abs() < 1e-12);
    }

    #[test]
    fn flow_matches_finite_difference_track() {
        let (s, k, spline) = flow_fixture();
        let x = Vector2::new(25.0, 18.0);
        let t = 0.27;
        let dt = 1e-4;
        let p0 = spline.sample(t).unwrap();
        let world = backproject(&x, plane_depth(&x, &k, &p0, &s.plane).unwrap(), &k, &p0).unwrap();
        let h = 1e-6;
        let track = |t: f64| project(&world, &k, &spline.sample(t).unwrap()).unwrap();
        let velocity = (track(t + h) - track(t - h)) / (2.0 * h);
        let f = gt_flow(&s, &k, &spline, &x, t, dt).unwrap();
        assert!((f - velocity * dt).norm() < 1e-4);
    }

    #[test]
    fn flow_forward_backward_consistency() {
        let (s, k, spline) = flow_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = Vector2::new(rng.gen_range(10.0..54.0), rng.gen_range(10.0..38.0));
            let (t, dt) = (rng.gen_range(0.15..0.4), 0.01);
            let f = gt_flow(&s, &k, &spline, &x, t, dt).unwrap();
            let b = gt_flow(&s, &k, &spline, &(x + f), t + dt, -dt).unwrap();
            assert!((f + b).norm() < 0.01);
        }
    }

    #[test]
    fn flow_out_of_view() {
        let (s, _, _) = flow_fixture();
        let k = CameraIntrinsics::from_hfov(50.0, 64, 48).unwrap();
        let poses = (0..6)
            .map(|j| Pose::from_center(UnitQuaternion::identity(), Vector3::new(3.2 + 0.07 * j as f64, 3.2, 0.0)))
            .collect();
        let spline = CumulativeBSpline::new(poses, 0.0, 0.1).unwrap();
        assert!(matches!(
            gt_flow(&s, &k, &spline, &Vector2::new(1.0, 20.0), 0.1, 0.2),
            Err(Error::OutOfView)
        ));
        assert!(gt_flow(&s, &k, &spline, &Vector2::new(40.0, 20.0), 0.1, 0.2).is_ok());
    }

    #[test]
    fn speed_scaling() {
        let (_, _, spline) = flow_fixture();
        assert_eq!(speed_scale(&spline, 1.0).unwrap(), spline);
        assert!(matches!(speed_scale(&spline, 0.0), Err(Error::InvalidScale(_))));
        assert!(matches!(speed_scale(&spline, -1.0), Err(Error::InvalidScale(_))));
        let fast = speed_scale(&spline, 2.0).unwrap();
        for t in [0.15, 0.3, 0.45] {
            let a = spline.sample(t).unwrap();
            let b = fast.sample(spline.t0 + (t - spline.t0) / 2.0).unwrap();
            assert!((a.translation - b.translation).norm() < 1e-12);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
        }
    }

    /// Composite Simpson quadrature of the translation speed.
    fn arc_length(s: &CumulativeBSpline, n: usize) -> f64 {
        let (a, b) = s.domain();
        let b = b - 1e-12;
        let h = (b - a) / n as f64;
        let speed = |t: f64| s.translation_velocity(t).unwrap().norm();
        let mut acc = speed(a) + speed(b);
        for i in 1..n {
            acc += speed(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn speed_scaling_preserves_arc_length() {
        let (_, _, spline) = flow_fixture();
        let fast = speed_scale(&spline, 1.3).unwrap();
        let (la, lb) = (arc_length(&spline, 20_000), arc_length(&fast, 20_000));
        assert!((la - lb).abs() < 1e-9);
    }

    #[test]
    fn bundled_scenes_render() {
        for name in BUNDLED_SCENES {
            let setup = bundled_scene_with_size(name, 256).unwrap();
            let (a, b) = setup.trajectory.domain();
            assert_eq!(a, 0.0);
            assert!(b >= BUNDLED_DURATION);
            let k = setup.intrinsics(64, 64).unwrap();
            for t in [0.0, 3.0, 7.5, 11.9] {
                let f = render_frame(&setup.scene, &k, &setup.trajectory.sample(t).unwrap(), t).unwrap();
                assert!(f.data.iter().all(|&v| v >= IRRADIANCE_FLOOR && v <= 1.0));
            }
            let v = setup.trajectory.translation_velocity(1.0).unwrap().norm();
            assert!((v - 10.0).abs() < 3.0, "{name} speed {v}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let setup = bundled_scene_with_size("rocks", 256).unwrap();
        let k = setup.intrinsics(48, 48).unwrap();
        let pose = setup.trajectory.sample(1.234).unwrap();
        let a = render_frame(&setup.scene, &k, &pose, 1.234).unwrap();
        let b = par::sequential(|| render_frame(&setup.scene, &k, &pose, 1.234).unwrap());
        assert_eq!(a, b);
    }
}
