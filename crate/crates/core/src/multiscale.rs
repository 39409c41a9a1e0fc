//! Resolution pyramid and event-rate scaling analysis.
//!
//! A low-resolution pixel integrates the irradiance falling on its footprint
//! (box filter with the pixel's side length) and is then subsampled. For
//! integer ratios this is a block mean; non-integer ratios use exact
//! fractional-area weights, which reduce to the block mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind};
use crate::par;
use crate::sensor::EventStream;

/// Block-mean downsampling by an integer factor `p`.
pub fn box_downsample(frame: &Frame, p: usize) -> Result<Frame> {
    if p == 0 || frame.width % p != 0 || frame.height % p != 0 {
        return Err(Error::Dimension(format!(
            "factor {p} does not divide {}x{}",
            frame.width, frame.height
        )));
    }
    if p == 1 {
        return Ok(frame.clone());
    }
    let (w, h) = (frame.width / p, frame.height / p);
    let inv = 1.0 / (p * p) as f64;
    let mut data = vec![0.0; w * h];
    par::for_each_row(&mut data, w, |yo, row| {
        for (xo, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for y in yo * p..(yo + 1) * p {
                let base = y * frame.width + xo * p;
                acc += frame.data[base..base + p].iter().sum::<f64>();
            }
            *out = acc * inv;
        }
    });
    Frame::new(w, h, frame.timestamp, frame.kind, data)
}

/// Sparse 1-D area-resampling weights: for every destination index, the
/// `(source index, weight)` pairs covering its footprint.
#[derive(Debug, Clone)]
pub struct AreaWeights {
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl AreaWeights {
    /// Destination pixel `j` covers the source interval `[j r, (j + 1) r)`
    /// with `r = src / dst`; weights are overlap lengths divided by `r`.
    pub fn new(src: usize, dst: usize) -> Self {
        let r = src as f64 / dst as f64;
        let taps = (0..dst)
            .map(|j| {
                if src % dst == 0 {
                    let p = src / dst;
                    let w = 1.0 / p as f64;
                    return (j * p..(j + 1) * p).map(|i| (i, w)).collect();
                }
                if dst % src == 0 {
                    return vec![(j / (dst / src), 1.0)];
                }
                let a = j as f64 * r;
                let b = (j + 1) as f64 * r;
                let first = a.floor() as usize;
                let last = ((b.ceil() as usize).min(src)).max(first + 1);
                (first..last)
                    .filter_map(|i| {
                        let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                        (overlap > 0.0).then_some((i, overlap / r))
                    })
                    .collect()
            })
            .collect();
        AreaWeights { taps }
    }
}

/// Separable area resampling to `width x height` (up or down). Both grids
/// cover the same field of view.
pub fn resample_area(frame: &Frame, width: usize, height: usize) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension("empty target resolution".into()));
    }
    if (width, height) == frame.resolution() {
        return Ok(frame.clone());
    }
    if frame.width % width == 0 && frame.height % height == 0 && frame.width / width == frame.height / height {
        return box_downsample(frame, frame.width / width);
    }
    let wx = AreaWeights::new(frame.width, width);
    let wy = AreaWeights::new(frame.height, height);
    // Horizontal pass: height_src x width.
    let mut tmp = vec![0.0; frame.height * width];
    par::for_each_row(&mut tmp, width, |y, row| {
        let src = &frame.data[y * frame.width..(y + 1) * frame.width];
        for (out, taps) in row.iter_mut().zip(&wx.taps) {
            *out = taps.iter().map(|&(i, w)| src[i] * w).sum();
        }
    });
    let mut data = vec![0.0; width * height];
    par::for_each_row(&mut data, width, |y, row| {
        for &(i, w) in &wy.taps[y] {
            let src = &tmp[i * width..(i + 1) * width];
            for (o, s) in row.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    });
    Frame::new(width, height, frame.timestamp, frame.kind, data)
}

/// Natural log of an irradiance frame.
pub fn log_frame(frame: &Frame) -> Result<Frame> {
    if let Some(v) = frame.data.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("log of non-positive irradiance {v}")));
    }
    Ok(frame.map(FrameKind::LogIntensity, f64::ln))
}

/// Forward difference `(L1 - L0) / (t1 - t0)`, stamped at the midpoint.
pub fn log_derivative(l0: &Frame, l1: &Frame) -> Result<Frame> {
    l0.same_shape(l1)?;
    let dt = l1.timestamp - l0.timestamp;
    if !(dt > 0.0) {
        return Err(Error::TimeOrder(format!(
            "log derivative needs t1 > t0 (got {} and {})",
            l0.timestamp, l1.timestamp
        )));
    }
    let data = l0.data.iter().zip(&l1.data).map(|(a, b)| (b - a) / dt).collect();
    Frame::new(
        l0.width,
        l0.height,
        0.5 * (l0.timestamp + l1.timestamp),
        FrameKind::LogDerivative,
        data,
    )
}

/// Least-squares line through `(log p, log |L_t|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Exponent `m` with `|L_t| ~ p^m`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub pixel_sizes: Vec<f64>,
}

pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<PowerLawFit> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|(p, v)| !(*p > 0.0) || !(*v > 0.0)) {
        return Err(Error::Domain(format!("non-positive power-law sample {s:?}")));
    }
    let mut ps: Vec<f64> = samples.iter().map(|s| s.0).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    if ps.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 distinct pixel sizes".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 1e-300 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
        pixel_sizes: ps,
    })
}

/// Mean of the `p x p` block whose top-left corner is `p/2` pixels before
/// `(x, y)` (clamped to the frame).
pub fn centered_box_mean(frame: &Frame, x: usize, y: usize, p: usize) -> f64 {
    let half = (p - 1) / 2;
    let x0 = x.saturating_sub(half).min(frame.width - p);
    let y0 = y.saturating_sub(half).min(frame.height - p);
    let mut acc = 0.0;
    for yy in y0..y0 + p {
        let row = &frame.data[yy * frame.width + x0..yy * frame.width + x0 + p];
        acc += row.iter().sum::<f64>();
    }
    acc / (p * p) as f64
}

/// `|L_t|` at pixel `(x, y)` for every pixel size in `sizes`, from two
/// irradiance frames: `|log(k*E1) - log(k*E0)| / dt` with a centered box `k`.
pub fn lt_versus_pixel_size(
    e0: &Frame,
    e1: &Frame,
    x: usize,
    y: usize,
    sizes: &[usize],
) -> Result<Vec<(f64, f64)>> {
    e0.same_shape(e1)?;
    let dt = e1.timestamp - e0.timestamp;
    if !(dt > 0.0) {
        return Err(Error::TimeOrder("frames must be time ordered".into()));
    }
    Ok(sizes
        .iter()
        .map(|&p| {
            let a = centered_box_mean(e0, x, y, p);
            let b = centered_box_mean(e1, x, y, p);
            (p as f64, ((b.ln() - a.ln()) / dt).abs())
        })
        .collect())
}

/// Histogram of same-pixel inter-event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterEventHistogram {
    /// Bin edges in seconds (`counts.len() + 1` values).
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Gaps outside `[edges[0], edges[last])`.
    pub below: u64,
    pub above: u64,
    pub n_gaps: u64,
    /// Median gap in seconds; `None` when no pixel fired twice.
    pub median: Option<f64>,
}

/// Logarithmically spaced edges from `lo` to `hi` seconds.
pub fn log_spaced_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..=n_bins)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / n_bins as f64))
        .collect()
}

/// Every successive same-pixel gap of a time-sorted stream, in seconds.
pub fn interevent_gaps(stream: &EventStream) -> Vec<f64> {
    let mut last = vec![u64::MAX; stream.width * stream.height];
    let mut gaps = Vec::new();
    for e in &stream.events {
        let i = e.y as usize * stream.width + e.x as usize;
        if last[i] != u64::MAX {
            gaps.push((e.t - last[i]) as f64 * 1e-9);
        }
        last[i] = e.t;
    }
    gaps
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn interevent_histogram(stream: &EventStream, edges: &[f64]) -> InterEventHistogram {
    let mut gaps = interevent_gaps(stream);
    let mut counts = vec![0u64; edges.len().saturating_sub(1)];
    let (mut below, mut above) = (0, 0);
    for &g in &gaps {
        if edges.len() < 2 || g < edges[0] {
            below += 1;
            continue;
        }
        match edges.partition_point(|&e| e <= g) {
            i if i >= edges.len() => above += 1,
            i => counts[i - 1] += 1,
        }
    }
    let n_gaps = gaps.len() as u64;
    InterEventHistogram {
        edges: edges.to_vec(),
        counts,
        below,
        above,
        n_gaps,
        median: median(&mut gaps),
    }
}
