//! Fixtures shared by the integration tests: captures of the bundled scenes.

#![allow(dead_code)]

use evres::geometry::CameraIntrinsics;
use evres::pipeline::{capture, Capture, CaptureRequest};
use evres::scene::{bundled_scene, bundled_scene_with_size, SceneSetup};
use evres::Cutoff;

pub const C: f64 = 0.2;
pub const FRAME_RATE: f64 = 5000.0;
pub const WARMUP: f64 = 0.04;
pub const RESOLUTIONS: [usize; 5] = [128, 240, 346, 640, 1280];

pub fn ns(t: f64) -> u64 {
    (t * 1e9).round() as u64
}

/// A bundled scene with its full-size texture, or a smaller one for quick tests.
pub fn scene(name: &str, texture_size: Option<usize>) -> SceneSetup {
    match texture_size {
        Some(s) => bundled_scene_with_size(name, s).expect("bundled scene"),
        None => bundled_scene(name).expect("bundled scene"),
    }
}

/// Reference time `offset` seconds into the scene trajectory.
pub fn t_ref(setup: &SceneSetup, offset: f64) -> f64 {
    setup.trajectory.domain().0 + offset
}

/// Simulates square sensors of the given widths around `t_ref`.
pub fn capture_square(
    setup: &SceneSetup,
    base: usize,
    widths: &[usize],
    cutoffs: &[Cutoff],
    t_ref: f64,
    duration: f64,
    warmup: f64,
    keep_offsets: Vec<f64>,
) -> (CameraIntrinsics, Capture) {
    let k = setup.intrinsics(base, base).expect("intrinsics");
    let req = CaptureRequest {
        resolutions: widths.iter().map(|&w| (w, w)).collect(),
        cutoffs: cutoffs.to_vec(),
        contrast_threshold: C,
        frame_rate: FRAME_RATE,
        warmup,
        t_ref,
        duration,
        keep_offsets,
    };
    let cap = capture(&setup.scene, &k, &setup.trajectory, &req).expect("capture");
    (k, cap)
}
