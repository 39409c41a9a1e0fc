//! Event-based photometric pose tracking against a planar reference view.
//!
//! An event at pixel `x` and time `t` is back-projected onto the scene
//! plane with the pose `T(t)` of a cumulative B-spline, re-projected into
//! the reference view `T_0` and looked up in the reference log image. As in
//! the flow estimator, consecutive events at a pixel must differ by the
//! contrast threshold; the spline's control poses are refined with
//! Levenberg-Marquardt while the threshold is refitted in closed form.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{pair_events, subsample_pairs, DropCounts, PairedEvent};
use crate::error::{Error, Result};
use crate::eval::metrics::position_error;
use crate::frame::Frame;
use crate::geometry::{skew, CameraIntrinsics, CumulativeBSpline, Plane, Pose, MIN_DEPTH};
use crate::sensor::Event;

pub const PARAMS_PER_POSE: usize = 6;

/// Reference view: log image, camera, scene plane and pose at `t_ref`.
#[derive(Debug, Clone)]
pub struct TrackingReference {
    pub l_ref: Frame,
    pub k: CameraIntrinsics,
    pub plane: Plane,
    pub pose: Pose,
    /// Absolute time of the reference view in seconds.
    pub t_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackOptions {
    /// Outer iterations per pyramid level.
    pub max_iterations: usize,
    pub step_tol: f64,
    pub rel_decrease_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Gaussian blur of the reference image per level, pixels, coarse to fine.
    pub blur_sigmas: Vec<f64>,
    /// Cap on the number of paired events (0 keeps all).
    pub max_events: usize,
    pub optimize_rotation: bool,
    /// Threshold used in the residuals; `None` refits it in closed form every
    /// outer iteration.
    pub contrast_threshold: Option<f64>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            max_iterations: 100,
            step_tol: 1e-8,
            rel_decrease_tol: 1e-6,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            blur_sigmas: vec![0.0],
            max_events: 0,
            optimize_rotation: true,
            contrast_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub spline: CumulativeBSpline,
    pub position_error_mm: Option<f64>,
    /// Least-squares threshold at the final estimate.
    pub c_hat: f64,
    /// Mean squared residual at the final estimate.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_residuals: usize,
    pub drops: DropCounts,
    pub trace: Vec<f64>,
}

impl TrackResult {
    /// Fills in the mean translation error against `gt`, sampled at `rate` Hz.
    pub fn with_ground_truth(mut self, gt: &CumulativeBSpline, rate: f64) -> Result<Self> {
        self.position_error_mm = Some(position_error(&self.spline, gt, rate)?);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackProblem {
    pub pairs: Vec<PairedEvent>,
    pub drops: DropCounts,
}

impl TrackProblem {
    /// Pairs `events` relative to `t_ref` and keeps at most `max_events` pairs.
    pub fn new(events: &[Event], t_ref: f64, max_events: usize) -> Self {
        let (pairs, unpaired) = pair_events(events, (t_ref * 1e9).round() as u64);
        let n = pairs.len();
        let pairs = subsample_pairs(pairs, max_events);
        let subsampled = n - pairs.len();
        TrackProblem {
            pairs,
            drops: DropCounts {
                unpaired,
                subsampled,
                ..Default::default()
            },
        }
    }
}

/// Projection of event pixel `x` at time `tau` into the reference view.
struct Warp {
    xr: Vector2<f64>,
    /// Index of the first control pose in the support of `tau`.
    first: usize,
    weights: [f64; 4],
    /// Left-increment Jacobians of the pose rotation at `tau` per control.
    rot_jac: [Matrix3<f64>; 4],
    /// d xr / d translation and d xr / d rotation of the pose at `tau`.
    d_trans: Matrix2x3<f64>,
    d_rot: Matrix2x3<f64>,
}

fn warp(
    spline: &CumulativeBSpline,
    r: &TrackingReference,
    x: &Vector2<f64>,
    tau: f64,
    with_jacobian: bool,
) -> Option<Warp> {
    let pose = spline.sample(tau).ok()?;
    let rt = pose.rotation.inverse();
    let dc = r.k.ray(x);
    let d = rt * dc;
    let o = -(rt * pose.translation);
    let n = r.plane.normal.into_inner();
    let denom = n.dot(&d);
    if denom.abs() < 1e-12 {
        return None;
    }
    let lambda = (r.plane.offset - n.dot(&o)) / denom;
    if !(lambda > MIN_DEPTH) {
        return None;
    }
    let world = o + d * lambda;
    let xc = r.pose.transform_point(&world);
    if xc.z <= MIN_DEPTH {
        return None;
    }
    let xr = Vector2::new(r.k.fx * xc.x / xc.z + r.k.cx, r.k.fy * xc.y / xc.z + r.k.cy);
    if !r.k.contains(&xr) {
        return None;
    }
    let (first, weights) = spline.translation_weights(tau).ok()?;
    let rot_jac = if with_jacobian {
        spline.rotation_jacobians(tau).ok()?.1
    } else {
        [Matrix3::zeros(); 4]
    };
    let (d_trans, d_rot) = if with_jacobian {
        let iz = 1.0 / xc.z;
        let jp = Matrix2x3::new(
            r.k.fx * iz,
            0.0,
            -r.k.fx * xc.x * iz * iz,
            0.0,
            r.k.fy * iz,
            -r.k.fy * xc.y * iz * iz,
        ) * r.pose.rotation_matrix();
        let proj = Matrix3::identity() - d * n.transpose() / denom;
        let rtm = rt.to_rotation_matrix().into_inner();
        let dx_dt = proj * (-rtm);
        let dx_dw = proj * (-rtm * skew(&pose.translation) + rtm * skew(&dc) * lambda);
        (jp * dx_dt, jp * dx_dw)
    } else {
        (Matrix2x3::zeros(), Matrix2x3::zeros())
    };
    Some(Warp {
        xr,
        first,
        weights,
        rot_jac,
        d_trans,
        d_rot,
    })
}

/// Log difference of one pair; `None` when a warp is invalid.
fn pair_delta(spline: &CumulativeBSpline, r: &TrackingReference, l: &Frame, e: &PairedEvent) -> Option<f64> {
    let x = Vector2::new(e.x as f64, e.y as f64);
    let t1 = r.t_ref + e.t;
    let w1 = warp(spline, r, &x, t1, false)?;
    let w0 = warp(spline, r, &x, t1 - e.dt, false)?;
    Some(l.bilinear(w1.xr.x, w1.xr.y).value - l.bilinear(w0.xr.x, w0.xr.y).value)
}

/// Log difference and its gradient w.r.t. all control-pose parameters
/// (translation, then left rotation increment, per pose).
fn pair_linearize(
    spline: &CumulativeBSpline,
    r: &TrackingReference,
    l: &Frame,
    e: &PairedEvent,
    row: &mut [f64],
) -> Option<(f64, usize, usize)> {
    let x = Vector2::new(e.x as f64, e.y as f64);
    let t1 = r.t_ref + e.t;
    let w1 = warp(spline, r, &x, t1, true)?;
    let w0 = warp(spline, r, &x, t1 - e.dt, true)?;
    let s1 = l.bilinear(w1.xr.x, w1.xr.y);
    let s0 = l.bilinear(w0.xr.x, w0.xr.y);
    let lo = w0.first.min(w1.first);
    let hi = (w0.first.max(w1.first) + 4).min(spline.len());
    row[lo * PARAMS_PER_POSE..hi * PARAMS_PER_POSE].fill(0.0);
    for (w, g, sign) in [(&w1, s1.grad, 1.0), (&w0, s0.grad, -1.0)] {
        let g = nalgebra::RowVector2::new(g[0], g[1]) * sign;
        let gt = g * w.d_trans;
        let gr = g * w.d_rot;
        for j in 0..4 {
            let base = (w.first + j) * PARAMS_PER_POSE;
            let wj = w.weights[j];
            let grj = gr * w.rot_jac[j];
            for a in 0..3 {
                row[base + a] += wj * gt[a];
                row[base + 3 + a] += grj[a];
            }
        }
    }
    Some((s1.value - s0.value, lo, hi))
}

/// `p_k * dL_k - c` for every pair whose warps are valid, and the number of
/// pairs dropped because a ray missed the plane or left the reference view.
pub fn eppt_residuals(
    spline: &CumulativeBSpline,
    pairs: &[PairedEvent],
    reference: &TrackingReference,
    c: f64,
) -> Result<(Vec<f64>, usize)> {
    let mut out = Vec::with_capacity(pairs.len());
    for e in pairs {
        if let Some(d) = pair_delta(spline, reference, &reference.l_ref, e) {
            out.push(e.polarity * d - c);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientConstraints("no event reprojects into the reference view".into()));
    }
    let dropped = pairs.len() - out.len();
    Ok((out, dropped))
}

/// Dense Jacobian rows `d residual_k / d params` for the valid pairs, with
/// the index of the pair each row belongs to.
pub fn eppt_jacobian(
    spline: &CumulativeBSpline,
    pairs: &[PairedEvent],
    reference: &TrackingReference,
) -> Vec<(usize, Vec<f64>)> {
    let n = spline.len() * PARAMS_PER_POSE;
    let mut rows = Vec::new();
    for (i, e) in pairs.iter().enumerate() {
        let mut row = vec![0.0; n];
        if pair_linearize(spline, reference, &reference.l_ref, e, &mut row).is_some() {
            row.iter_mut().for_each(|v| *v *= e.polarity);
            rows.push((i, row));
        }
    }
    rows
}

/// Control poses moved by `delta`: translations added, rotations
/// left-multiplied by `exp(omega)`.
pub fn apply_update(spline: &CumulativeBSpline, delta: &[f64]) -> CumulativeBSpline {
    let mut out = spline.clone();
    for (j, p) in out.control_poses.iter_mut().enumerate() {
        let b = j * PARAMS_PER_POSE;
        let dt = Vector3::new(delta[b], delta[b + 1], delta[b + 2]);
        let dw = Vector3::new(delta[b + 3], delta[b + 4], delta[b + 5]);
        *p = Pose::new(UnitQuaternion::from_scaled_axis(dw) * p.rotation, p.translation + dt);
    }
    out
}

struct Linearization {
    active: Vec<usize>,
    /// Threshold used in the residuals.
    c: f64,
    /// Closed-form least-squares threshold.
    c_fit: f64,
    f: f64,
    h: DMatrix<f64>,
    g: DVector<f64>,
}

fn linearize(
    spline: &CumulativeBSpline,
    r: &TrackingReference,
    l: &Frame,
    pairs: &[PairedEvent],
    optimize_rotation: bool,
    fixed_c: Option<f64>,
) -> Option<Linearization> {
    let n = spline.len() * PARAMS_PER_POSE;
    let mut rows: Vec<(usize, f64, usize, usize, Vec<f64>)> = Vec::new();
    let mut row = vec![0.0; n];
    for (i, e) in pairs.iter().enumerate() {
        if let Some((d, lo, hi)) = pair_linearize(spline, r, l, e, &mut row) {
            let a = lo * PARAMS_PER_POSE;
            let b = hi * PARAMS_PER_POSE;
            let mut seg: Vec<f64> = row[a..b].iter().map(|v| v * e.polarity).collect();
            if !optimize_rotation {
                for (k, v) in seg.iter_mut().enumerate() {
                    if k % PARAMS_PER_POSE >= 3 {
                        *v = 0.0;
                    }
                }
            }
            rows.push((i, e.polarity * d, a, b, seg));
        }
    }
    if rows.is_empty() {
        return None;
    }
    let m = rows.len() as f64;
    let c_fit = rows.iter().map(|r| r.1).sum::<f64>() / m;
    let c = fixed_c.unwrap_or(c_fit);
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut f = 0.0;
    for (_, pd, a, _, seg) in &rows {
        let res = pd - c;
        f += res * res;
        for (p, &jp) in seg.iter().enumerate() {
            if jp == 0.0 {
                continue;
            }
            g[a + p] += jp * res;
            for (q, &jq) in seg.iter().enumerate().skip(p) {
                h[(a + p, a + q)] += jp * jq;
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            h[(p, q)] = h[(q, p)];
        }
    }
    Some(Linearization {
        active: rows.iter().map(|r| r.0).collect(),
        c,
        c_fit,
        f: f / m,
        h: h / m,
        g: g / m,
    })
}

/// Mean squared residual over `active` at a fixed threshold; invalid warps
/// count as a residual of `-c` (no predicted change).
fn objective_on(
    spline: &CumulativeBSpline,
    r: &TrackingReference,
    l: &Frame,
    pairs: &[PairedEvent],
    active: &[usize],
    c: f64,
) -> f64 {
    let sum: f64 = active
        .iter()
        .map(|&i| {
            let e = &pairs[i];
            let d = pair_delta(spline, r, l, e).unwrap_or(0.0);
            let res = e.polarity * d - c;
            res * res
        })
        .sum();
    sum / active.len() as f64
}

/// Refines `init` so the events agree with the reference view.
pub fn eppt_track(
    problem: &TrackProblem,
    reference: &TrackingReference,
    init: &CumulativeBSpline,
    opts: &TrackOptions,
) -> Result<TrackResult> {
    let pairs = &problem.pairs;
    if pairs.is_empty() {
        return Err(Error::InsufficientConstraints("no paired events".into()));
    }
    let n = init.len() * PARAMS_PER_POSE;
    let mut spline = init.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let levels = if opts.blur_sigmas.is_empty() { vec![0.0] } else { opts.blur_sigmas.clone() };
    for &sigma in &levels {
        let l = if sigma > 0.0 { reference.l_ref.gaussian_blur(sigma) } else { reference.l_ref.clone() };
        let mut lambda = opts.lambda_init;
        converged = false;
        for _ in 0..opts.max_iterations {
            let Some(lin) = linearize(&spline, reference, &l, pairs, opts.optimize_rotation, opts.contrast_threshold) else {
                return Err(Error::InsufficientConstraints("every event left the reference view".into()));
            };
            if !lin.f.is_finite() {
                return Err(Error::Diverged);
            }
            iterations += 1;
            trace.push(lin.f);
            let diag_max = (0..n).map(|i| lin.h[(i, i)]).fold(0.0f64, f64::max);
            let eps = 1e-12 * diag_max.max(1e-300);
            let mut step_taken = None;
            while lambda < 1e12 {
                let mut a = lin.h.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * lin.h[(i, i)] + eps + if lin.h[(i, i)] == 0.0 { 1.0 } else { 0.0 };
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= opts.lambda_up;
                    continue;
                };
                let delta = chol.solve(&(-&lin.g));
                let trial = apply_update(&spline, delta.as_slice());
                let f = objective_on(&trial, reference, &l, pairs, &lin.active, lin.c);
                if f.is_finite() && f < lin.f {
                    lambda = (lambda * opts.lambda_down).max(1e-12);
                    step_taken = Some((trial, delta.norm(), f));
                    break;
                }
                if delta.norm() < opts.step_tol {
                    break;
                }
                lambda *= opts.lambda_up;
            }
            let Some((trial, step_norm, f)) = step_taken else {
                converged = true;
                break;
            };
            spline = trial;
            if step_norm < opts.step_tol || (lin.f - f) < opts.rel_decrease_tol * lin.f {
                converged = true;
                break;
            }
        }
    }
    let l = &reference.l_ref;
    let Some(fin) = linearize(&spline, reference, l, pairs, opts.optimize_rotation, opts.contrast_threshold) else {
        return Err(Error::InsufficientConstraints("every event left the reference view".into()));
    };
    trace.push(fin.f);
    let mut drops = problem.drops;
    drops.out_of_view = pairs.len() - fin.active.len();
    Ok(TrackResult {
        spline,
        position_error_mm: None,
        c_hat: fin.c_fit,
        residual_norm: fin.f,
        iterations,
        converged,
        n_residuals: fin.active.len(),
        drops,
        trace,
    })
}

/// Tracker spline for a window starting at `t_ref`: `n` control poses spaced
/// `knot_spacing`, sampled from `trajectory`, with domain starting at `t_ref`.
pub fn spline_from_trajectory(
    trajectory: &CumulativeBSpline,
    t_ref: f64,
    n: usize,
    knot_spacing: f64,
) -> Result<CumulativeBSpline> {
    let t0 = t_ref - knot_spacing;
    let poses = (0..n)
        .map(|j| trajectory.sample(t0 + j as f64 * knot_spacing))
        .collect::<Result<Vec<_>>>()?;
    CumulativeBSpline::new(poses, t0, knot_spacing)
}
