//! Event-based photometric flow.
//!
//! Under a constant image velocity `v` the brightness at pixel `x` and time
//! `t` (relative to the reference frame) is `L_ref(x - v t)`. Consecutive
//! events at a pixel must then differ by the contrast threshold:
//! `p_k (L_ref(x_k - v t_k) - L_ref(x_k - v (t_k - dt_k))) = C`.
//! The threshold is eliminated in closed form and `v` is found by gradient
//! descent with a backtracking line search.

use serde::{Deserialize, Serialize};

use super::{pair_events, DropCounts, PairedEvent};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::sensor::{Event, EventStream};

/// Reference-resolution patch side and the height it applies to.
pub const REFERENCE_PATCH_SIDE: usize = 61;
pub const REFERENCE_HEIGHT: usize = 1280;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub max_iterations: usize,
    /// Bound on `|grad| / (2 sqrt(f * jac_sq))`, which lies in [0, 1] and does
    /// not depend on the units of `v` or of the image.
    pub grad_tol: f64,
    /// Bound on the decrease of the objective relative to its value.
    pub decrease_tol: f64,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            max_iterations: 500,
            grad_tol: 1e-6,
            decrease_tol: 1e-12,
            armijo_c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    /// Pixels per second.
    pub v: [f64; 2],
    pub c_hat: f64,
    /// Mean squared residual at `v` with the refitted threshold.
    pub residual_norm: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_residuals: usize,
    pub drops: DropCounts,
    /// Objective after every accepted step, starting at the initial value.
    pub trace: Vec<f64>,
}

/// Paired events of one patch, with times relative to the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProblem {
    pub pairs: Vec<PairedEvent>,
    pub drops: DropCounts,
}

impl FlowProblem {
    pub fn new(events: &[Event], t_ref: f64) -> Self {
        let t_ref_ns = (t_ref * 1e9).round() as u64;
        let (pairs, unpaired) = pair_events(events, t_ref_ns);
        FlowProblem {
            pairs,
            drops: DropCounts {
                unpaired,
                ..Default::default()
            },
        }
    }
}

/// Odd patch side for a sensor of the given height, at least 7.
pub fn patch_side(height: usize) -> usize {
    let s = (REFERENCE_PATCH_SIDE as f64 * height as f64 / REFERENCE_HEIGHT as f64).round() as usize;
    let s = if s % 2 == 0 { s + 1 } else { s };
    s.max(7)
}

/// Events inside the `side x side` square centered on pixel `(cx, cy)`.
pub fn patch_events(stream: &EventStream, cx: usize, cy: usize, side: usize) -> Vec<Event> {
    let half = (side / 2) as i64;
    stream
        .events
        .iter()
        .filter(|e| (e.x as i64 - cx as i64).abs() <= half && (e.y as i64 - cy as i64).abs() <= half)
        .copied()
        .collect()
}

/// Log-intensity difference predicted for one pair and its gradient in `v`.
#[inline]
pub fn delta_l(v: [f64; 2], e: &PairedEvent, l_ref: &Frame) -> (f64, [f64; 2]) {
    let (x, y) = (e.x as f64, e.y as f64);
    let t1 = e.t;
    let t0 = e.t - e.dt;
    let a = l_ref.bilinear(x - v[0] * t1, y - v[1] * t1);
    let b = l_ref.bilinear(x - v[0] * t0, y - v[1] * t0);
    (
        a.value - b.value,
        [
            -t1 * a.grad[0] + t0 * b.grad[0],
            -t1 * a.grad[1] + t0 * b.grad[1],
        ],
    )
}

fn check(pairs: &[PairedEvent]) -> Result<()> {
    if pairs.is_empty() {
        Err(Error::InsufficientEvents("no paired events in the patch".into()))
    } else {
        Ok(())
    }
}

/// `p_k * dL_k(v) - c` for every pair.
pub fn epf_residuals(v: [f64; 2], pairs: &[PairedEvent], l_ref: &Frame, c: f64) -> Result<Vec<f64>> {
    check(pairs)?;
    Ok(pairs.iter().map(|e| e.polarity * delta_l(v, e, l_ref).0 - c).collect())
}

/// Least-squares threshold: the mean of `p_k * dL_k(v)`.
pub fn epf_fit_c(v: [f64; 2], pairs: &[PairedEvent], l_ref: &Frame) -> Result<f64> {
    check(pairs)?;
    Ok(pairs.iter().map(|e| e.polarity * delta_l(v, e, l_ref).0).sum::<f64>() / pairs.len() as f64)
}

struct Eval {
    c: f64,
    f: f64,
    grad: [f64; 2],
    /// Mean squared norm of `d dL / d v`, a curvature scale.
    jac_sq: f64,
}

fn evaluate(v: [f64; 2], pairs: &[PairedEvent], l_ref: &Frame, c: Option<f64>) -> Eval {
    let n = pairs.len() as f64;
    let vals: Vec<(f64, [f64; 2])> = pairs.iter().map(|e| delta_l(v, e, l_ref)).collect();
    let c = c.unwrap_or_else(|| vals.iter().zip(pairs).map(|((d, _), e)| e.polarity * d).sum::<f64>() / n);
    let mut f = 0.0;
    let mut g = [0.0; 2];
    let mut jac_sq = 0.0;
    for ((d, j), e) in vals.iter().zip(pairs) {
        let r = e.polarity * d - c;
        f += r * r;
        g[0] += 2.0 * r * e.polarity * j[0];
        g[1] += 2.0 * r * e.polarity * j[1];
        jac_sq += j[0] * j[0] + j[1] * j[1];
    }
    Eval {
        c,
        f: f / n,
        grad: [g[0] / n, g[1] / n],
        jac_sq: jac_sq / n,
    }
}

fn objective(v: [f64; 2], pairs: &[PairedEvent], l_ref: &Frame, c: f64) -> f64 {
    let n = pairs.len() as f64;
    pairs
        .iter()
        .map(|e| {
            let r = e.polarity * delta_l(v, e, l_ref).0 - c;
            r * r
        })
        .sum::<f64>()
        / n
}

/// Flow of one patch starting from `v_init` (pixels per second).
pub fn epf_estimate(problem: &FlowProblem, l_ref: &Frame, v_init: [f64; 2], opts: &FlowOptions) -> Result<FlowEstimate> {
    let pairs = &problem.pairs;
    check(pairs)?;
    let mut v = v_init;
    let mut cur = evaluate(v, pairs, l_ref, None);
    if !cur.f.is_finite() {
        return Err(Error::Diverged);
    }
    let mut trace = vec![cur.f];
    let mut step = if cur.jac_sq > 0.0 { 0.5 / cur.jac_sq } else { 1.0 };
    let mut iterations = 0;
    let norm = |g: [f64; 2]| g[0].hypot(g[1]);
    let stationary = |e: &Eval| {
        let scale = 2.0 * (e.f * e.jac_sq).sqrt();
        scale == 0.0 || norm(e.grad) < opts.grad_tol * scale
    };
    while iterations < opts.max_iterations && !stationary(&cur) {
        iterations += 1;
        let g = cur.grad;
        let slope = -(g[0] * g[0] + g[1] * g[1]);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = [v[0] - alpha * g[0], v[1] - alpha * g[1]];
            let f = objective(trial, pairs, l_ref, cur.c);
            if !f.is_finite() {
                return Err(Error::Diverged);
            }
            if f <= cur.f + opts.armijo_c1 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= opts.shrink;
        }
        let Some(next) = accepted else { break };
        let new = evaluate(next, pairs, l_ref, None);
        if !new.f.is_finite() {
            return Err(Error::Diverged);
        }
        // Barzilai-Borwein step for the next iteration.
        let s = [next[0] - v[0], next[1] - v[1]];
        let y = [new.grad[0] - g[0], new.grad[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        step = if sy > 0.0 { (s[0] * s[0] + s[1] * s[1]) / sy } else { alpha * 2.0 };
        let decrease = cur.f - new.f;
        v = next;
        cur = new;
        trace.push(cur.f);
        if decrease < opts.decrease_tol * trace[trace.len() - 2] {
            break;
        }
    }
    let grad_norm = norm(cur.grad);
    let converged = stationary(&cur);
    Ok(FlowEstimate {
        v,
        c_hat: cur.c,
        residual_norm: cur.f,
        grad_norm,
        iterations,
        converged,
        n_residuals: pairs.len(),
        drops: problem.drops,
        trace,
    })
}
