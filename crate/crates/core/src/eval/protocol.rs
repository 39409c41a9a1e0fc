//! Per-problem task protocols shared by the sweep and the command line:
//! one reconstruction window, one flow patch, one tracking trial.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::{psnr, rnepe, RNEPE_REFERENCE_HEIGHT};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{CameraIntrinsics, CumulativeBSpline, Pose};
use crate::scene::{gt_flow, TemplateScene};
use crate::sensor::EventStream;
use crate::tasks::ei::ei_reconstruct;
use crate::tasks::epf::{epf_estimate, patch_events, patch_side, FlowEstimate, FlowOptions, FlowProblem};
use crate::tasks::eppt::{eppt_track, spline_from_trajectory, TrackOptions, TrackProblem, TrackResult, TrackingReference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionProtocol {
    /// Window at speed 1, milliseconds.
    pub window_ms: f64,
}

impl Default for ReconstructionProtocol {
    fn default() -> Self {
        ReconstructionProtocol { window_ms: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowProtocol {
    /// Window at speed 1, milliseconds.
    pub window_ms: f64,
    /// Patch centers on a `grid[0] x grid[1]` lattice over the central area.
    pub grid: [usize; 2],
    /// Fraction of the image kept free on each side of the lattice.
    pub margin: f64,
    /// Patches whose mean log gradient (per pixel, at the reference height)
    /// falls below this are skipped as untextured.
    pub min_gradient: f64,
    /// Standard deviation of the initial displacement error at the reference
    /// height, pixels per component; scaled with the sensor height.
    pub init_sigma_px: f64,
    pub options: FlowOptions,
}

impl Default for FlowProtocol {
    fn default() -> Self {
        FlowProtocol {
            window_ms: 50.0,
            grid: [5, 4],
            margin: 0.2,
            min_gradient: 1e-3,
            init_sigma_px: 3.0,
            options: FlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingProtocol {
    pub n_controls: usize,
    /// Knot spacing at speed 1, milliseconds.
    pub knot_spacing_ms: f64,
    /// Per-component translation noise on every control pose, meters.
    pub init_sigma_m: f64,
    /// Reference blur per pyramid level at the reference height, pixels.
    pub blur_sigmas_px: Vec<f64>,
    pub max_events: usize,
    /// Position error sample rate, Hz.
    pub error_rate_hz: f64,
    /// Refit the threshold from the events instead of using the sensor's.
    /// The refit objective is minimized by a frozen trajectory (every
    /// predicted log difference zero), so it is off by default.
    pub refit_threshold: bool,
    pub options: TrackOptions,
}

impl Default for TrackingProtocol {
    fn default() -> Self {
        TrackingProtocol {
            n_controls: 10,
            knot_spacing_ms: 2.0,
            init_sigma_m: 0.2,
            blur_sigmas_px: vec![4.0, 2.0, 1.0, 0.0],
            max_events: 30_000,
            error_rate_hz: 1000.0,
            refit_threshold: false,
            options: TrackOptions::default(),
        }
    }
}

impl TrackingProtocol {
    /// Length of the tracked window at speed 1, seconds.
    pub fn window(&self) -> f64 {
        (self.n_controls.saturating_sub(3)) as f64 * self.knot_spacing_ms * 1e-3
    }
}

/// Task kinds, also used to separate random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Flow,
    Tracking,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Reconstruction, Task::Flow, Task::Tracking];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Reconstruction => "reconstruction",
            Task::Flow => "flow",
            Task::Tracking => "tracking",
        }
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Task::Reconstruction => "psnr_db",
            Task::Flow => "rnepe_px",
            Task::Tracking => "position_error_mm",
        }
    }

    /// Whether larger metric values are better.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Task::Reconstruction)
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

/// Generator for one (task, problem, item), keyed by the seed.
pub fn problem_rng(seed: u64, task: Task, problem: usize, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((task as u64) << 56) | ((problem as u64) << 24) | item as u64);
    rng
}

/// PSNR of the event-integrated keyframe against the target, both at the
/// base resolution; `peak` is the scene's log range.
pub fn run_reconstruction(keyframe: &Frame, target: &Frame, events: &EventStream, c: f64, peak: f64) -> Result<f64> {
    psnr(&ei_reconstruct(keyframe, events, c)?, target, peak)
}

/// Patch centers of the flow lattice on a `width x height` sensor.
pub fn flow_patch_centers(width: usize, height: usize, proto: &FlowProtocol) -> Vec<(usize, usize)> {
    let [gx, gy] = proto.grid;
    let lattice = |i: usize, n: usize, size: usize| {
        let u = if n == 1 {
            0.5
        } else {
            proto.margin + (1.0 - 2.0 * proto.margin) * i as f64 / (n - 1) as f64
        };
        (u * (size - 1) as f64).round() as usize
    };
    (0..gy)
        .flat_map(|j| (0..gx).map(move |i| (i, j)))
        .map(|(i, j)| (lattice(i, gx, width), lattice(j, gy, height)))
        .collect()
}

/// Mean log-gradient magnitude over the patch interior.
pub fn patch_gradient(l: &Frame, cx: usize, cy: usize, side: usize) -> f64 {
    let half = side / 2;
    let (x0, x1) = (cx.saturating_sub(half).max(1), (cx + half).min(l.width.saturating_sub(2)));
    let (y0, y1) = (cy.saturating_sub(half).max(1), (cy + half).min(l.height.saturating_sub(2)));
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            sum += l.gradient_magnitude(x, y);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Result of one flow patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub center: [usize; 2],
    /// Ground-truth displacement over the window, pixels.
    pub displacement_gt: [f64; 2],
    /// Perturbed initial displacement, pixels.
    pub displacement_init: [f64; 2],
    /// Estimated displacement, pixels.
    pub displacement: [f64; 2],
    pub rnepe: f64,
    pub estimate: FlowEstimate,
}

/// Everything a flow patch needs besides its center.
pub struct FlowSetup<'a> {
    pub scene: &'a TemplateScene,
    /// Camera at the sensor resolution.
    pub k: &'a CameraIntrinsics,
    pub trajectory: &'a CumulativeBSpline,
    /// Events of the window `[t_ref, t_ref + dt)`.
    pub window: &'a EventStream,
    /// Log image at `t_ref`, sensor resolution.
    pub l_ref: &'a Frame,
    pub t_ref: f64,
    pub dt: f64,
    pub proto: &'a FlowProtocol,
}

impl FlowSetup<'_> {
    /// Whether the patch at `center` has enough texture to be used.
    pub fn is_textured(&self, center: (usize, usize)) -> bool {
        let h = self.l_ref.height;
        let scale = h as f64 / RNEPE_REFERENCE_HEIGHT;
        patch_gradient(self.l_ref, center.0, center.1, patch_side(h)) >= self.proto.min_gradient / scale
    }

    /// Estimates the patch flow from a perturbed ground-truth start.
    pub fn run(&self, center: (usize, usize), rng: &mut impl Rng) -> Result<FlowOutcome> {
        let h = self.l_ref.height;
        let scale = h as f64 / RNEPE_REFERENCE_HEIGHT;
        let side = patch_side(h);
        let dt = self.dt;
        let c = Vector2::new(center.0 as f64, center.1 as f64);
        let disp = gt_flow(self.scene, self.k, self.trajectory, &c, self.t_ref, dt)?;
        let noise = Normal::new(0.0, self.proto.init_sigma_px * scale).map_err(|e| Error::Config(e.to_string()))?;
        let init = [disp.x + noise.sample(rng), disp.y + noise.sample(rng)];
        let problem = FlowProblem::new(&patch_events(self.window, center.0, center.1, side), self.t_ref);
        let estimate = epf_estimate(&problem, self.l_ref, [init[0] / dt, init[1] / dt], &self.proto.options)?;
        let displacement = [estimate.v[0] * dt, estimate.v[1] * dt];
        Ok(FlowOutcome {
            center: [center.0, center.1],
            displacement_gt: [disp.x, disp.y],
            displacement_init: init,
            displacement,
            rnepe: rnepe(displacement, [disp.x, disp.y], h as f64),
            estimate,
        })
    }
}

/// Blur levels scaled to a sensor; levels that shrink below a third of a
/// pixel are dropped, and the sharp level is always last.
pub fn scaled_blur_levels(levels: &[f64], scale: f64) -> Vec<f64> {
    let mut out: Vec<f64> = levels.iter().map(|s| s * scale).filter(|&s| s >= 1.0 / 3.0).collect();
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out.push(0.0);
    out
}

/// Everything a tracking trial needs.
pub struct TrackingSetup<'a> {
    pub scene: &'a TemplateScene,
    /// Camera at the sensor resolution.
    pub k: &'a CameraIntrinsics,
    pub trajectory: &'a CumulativeBSpline,
    /// Events of the tracked window.
    pub window: &'a EventStream,
    /// Log image at `t_ref`, sensor resolution.
    pub l_ref: &'a Frame,
    pub t_ref: f64,
    /// Speed scale of `trajectory`; shortens the knot spacing.
    pub speed: f64,
    /// Sensor contrast threshold.
    pub contrast_threshold: f64,
    pub proto: &'a TrackingProtocol,
}

impl TrackingSetup<'_> {
    /// Tracks from ground truth with every control translation perturbed.
    pub fn run(&self, rng: &mut impl Rng) -> Result<TrackResult> {
        let p = self.proto;
        let spacing = p.knot_spacing_ms * 1e-3 / self.speed;
        let gt = spline_from_trajectory(self.trajectory, self.t_ref, p.n_controls, spacing)?;
        let noise = Normal::new(0.0, p.init_sigma_m).map_err(|e| Error::Config(e.to_string()))?;
        let poses = gt
            .control_poses
            .iter()
            .map(|c| {
                let d = Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
                Pose::new(c.rotation, c.translation + d)
            })
            .collect();
        let init = CumulativeBSpline::new(poses, gt.t0, gt.knot_spacing)?;
        let reference = TrackingReference {
            l_ref: self.l_ref.clone(),
            k: *self.k,
            plane: self.scene.plane,
            pose: self.trajectory.sample(self.t_ref)?,
            t_ref: self.t_ref,
        };
        let scale = self.l_ref.height as f64 / RNEPE_REFERENCE_HEIGHT;
        let mut opts = p.options.clone();
        opts.blur_sigmas = scaled_blur_levels(&p.blur_sigmas_px, scale);
        opts.max_events = p.max_events;
        opts.contrast_threshold = (!p.refit_threshold).then_some(self.contrast_threshold);
        let problem = TrackProblem::new(&self.window.events, self.t_ref, p.max_events);
        eppt_track(&problem, &reference, &init, &opts)?.with_ground_truth(&gt, p.error_rate_hz)
    }
}
