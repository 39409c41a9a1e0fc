//! Shared-field-of-view capture: one base-resolution rendering per frame is
//! area-resampled to every sensor resolution and fed to one event simulator
//! per (resolution, cutoff) pair.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{CameraIntrinsics, CumulativeBSpline};
use crate::multiscale::{log_frame, resample_area};
use crate::par;
use crate::scene::{render_frame, TemplateScene};
use crate::sensor::{Cutoff, EventSimulator, EventStream, SensorConfig};

/// What to simulate around one reference time.
#[derive(Debug, Clone)]
pub struct CaptureRequest {
    pub resolutions: Vec<(usize, usize)>,
    pub cutoffs: Vec<Cutoff>,
    pub contrast_threshold: f64,
    pub frame_rate: f64,
    /// Simulation starts this long before `t_ref` so the filters settle.
    pub warmup: f64,
    /// Events are recorded over `[t_ref, t_ref + duration]`.
    pub t_ref: f64,
    pub duration: f64,
    /// Offsets from `t_ref` (seconds) at which base-resolution log frames are kept.
    pub keep_offsets: Vec<f64>,
}

impl CaptureRequest {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() || self.cutoffs.is_empty() {
            return Err(Error::Config("no resolutions or cutoffs".into()));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("frame rate {} must be positive", self.frame_rate)));
        }
        if !(self.warmup >= 0.0 && self.duration > 0.0) {
            return Err(Error::Config("warmup must be >= 0 and duration > 0".into()));
        }
        for &(w, h) in &self.resolutions {
            SensorConfig::new(w, h, self.contrast_threshold, Cutoff::IDEAL)?;
        }
        for &o in &self.keep_offsets {
            if !(0.0..=self.duration + 1e-12).contains(&o) {
                return Err(Error::Config(format!("kept frame offset {o} outside the window")));
            }
        }
        Ok(())
    }

    fn frame_index(&self, offset: f64) -> usize {
        (self.warmup * self.frame_rate).ceil() as usize + (offset * self.frame_rate).round() as usize
    }
}

/// Output of [`capture`].
#[derive(Debug, Clone)]
pub struct Capture {
    /// Stream for `(resolutions[i], cutoffs[j])` at index `i * cutoffs.len() + j`.
    pub streams: Vec<EventStream>,
    /// Log frame at `t_ref` for every resolution.
    pub ref_logs: Vec<Frame>,
    /// Base-resolution log frames at the requested offsets.
    pub kept: Vec<Frame>,
}

impl Capture {
    pub fn stream(&self, res_index: usize, cutoff_index: usize, n_cutoffs: usize) -> &EventStream {
        &self.streams[res_index * n_cutoffs + cutoff_index]
    }
}

/// Renders `scene` along `trajectory` with `k_base` and simulates every sensor.
pub fn capture(
    scene: &TemplateScene,
    k_base: &CameraIntrinsics,
    trajectory: &CumulativeBSpline,
    req: &CaptureRequest,
) -> Result<Capture> {
    req.validate()?;
    let n_warm = (req.warmup * req.frame_rate).ceil() as usize;
    let n_frames = n_warm + (req.duration * req.frame_rate).ceil() as usize + 1;
    let ref_index = n_warm;
    let keep: Vec<usize> = req.keep_offsets.iter().map(|&o| req.frame_index(o)).collect();
    let n_cut = req.cutoffs.len();
    let mut sims: Vec<EventSimulator> = Vec::new();
    let mut ref_logs = Vec::new();
    let mut kept: Vec<Option<Frame>> = vec![None; keep.len()];
    for i in 0..n_frames {
        let t = req.t_ref + (i as f64 - n_warm as f64) / req.frame_rate;
        let pose = trajectory.sample(t)?;
        let base = render_frame(scene, k_base, &pose, t)?;
        let logs = par::map(&req.resolutions, |&(w, h)| log_frame(&resample_area(&base, w, h)?))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (slot, &idx) in kept.iter_mut().zip(&keep) {
            if idx == i {
                *slot = Some(log_frame(&base)?);
            }
        }
        if i == ref_index {
            ref_logs = logs.clone();
        }
        if i == 0 {
            sims = (0..req.resolutions.len() * n_cut)
                .map(|s| {
                    let (w, h) = req.resolutions[s / n_cut];
                    let cfg = SensorConfig::new(w, h, req.contrast_threshold, req.cutoffs[s % n_cut])?;
                    Ok(EventSimulator::new(cfg, &logs[s / n_cut])?.record_from(req.t_ref))
                })
                .collect::<Result<Vec<_>>>()?;
        } else {
            par::map_rows(&mut sims, 1, |s, sim| sim[0].advance(&logs[s / n_cut]))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
        }
    }
    let kept = kept
        .into_iter()
        .map(|f| f.ok_or_else(|| Error::Config("kept frame outside the rendered range".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Capture {
        streams: sims.into_iter().map(EventSimulator::finish).collect(),
        ref_logs,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::bundled_scene_with_size;

    #[test]
    fn capture_shapes_and_reference_frames() {
        let setup = bundled_scene_with_size("rocks", 256).unwrap();
        let k = setup.intrinsics(64, 64).unwrap();
        let req = CaptureRequest {
            resolutions: vec![(64, 64), (32, 32), (20, 20)],
            cutoffs: vec![Cutoff::IDEAL, Cutoff::hz(50.0).unwrap()],
            contrast_threshold: 0.1,
            frame_rate: 1000.0,
            warmup: 0.005,
            t_ref: 1.0,
            duration: 0.02,
            keep_offsets: vec![0.0, 0.02],
        };
        let cap = capture(&setup.scene, &k, &setup.trajectory, &req).unwrap();
        assert_eq!(cap.streams.len(), 6);
        assert_eq!(cap.ref_logs.len(), 3);
        assert_eq!(cap.kept.len(), 2);
        assert!((cap.kept[0].timestamp - 1.0).abs() < 1e-12);
        assert!((cap.kept[1].timestamp - 1.02).abs() < 1e-9);
        for (s, stream) in cap.streams.iter().enumerate() {
            let (w, h) = req.resolutions[s / 2];
            assert_eq!((stream.width, stream.height), (w, h));
            assert_eq!(stream.t_start, 1_000_000_000);
            stream.validate().unwrap();
        }
        // The resampled reference equals a direct resample of the kept base frame.
        let direct = crate::multiscale::resample_area(&cap.kept[0].map(crate::frame::FrameKind::Irradiance, f64::exp), 32, 32).unwrap();
        for (a, b) in cap.ref_logs[1].data.iter().zip(&direct.data) {
            assert!((a - b.ln()).abs() < 1e-9);
        }
        // The ideal full-resolution sensor fires.
        assert!(!cap.streams[0].is_empty());
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let setup = bundled_scene_with_size("rocks", 64).unwrap();
        let k = setup.intrinsics(32, 32).unwrap();
        let mut req = CaptureRequest {
            resolutions: vec![(32, 32)],
            cutoffs: vec![Cutoff::IDEAL],
            contrast_threshold: 0.1,
            frame_rate: 0.0,
            warmup: 0.0,
            t_ref: 1.0,
            duration: 0.01,
            keep_offsets: vec![],
        };
        assert!(capture(&setup.scene, &k, &setup.trajectory, &req).is_err());
        req.frame_rate = 100.0;
        req.keep_offsets = vec![0.5];
        assert!(capture(&setup.scene, &k, &setup.trajectory, &req).is_err());
    }
}
