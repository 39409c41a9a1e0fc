//! `evres simulate`: EVT1 files for every requested resolution and cutoff.

use std::path::Path;

use evres::io::{write_evt, write_pgm_file, GrayImage};
use evres::pipeline::{capture, CaptureRequest};
use evres::{Cutoff, Frame};

use crate::common::{now_unix, out_dir, CmdResult, RunManifest, SimulateConfig};

/// File name of the stream for one sensor.
pub fn events_file_name(w: usize, h: usize, cutoff: Cutoff) -> String {
    format!("events_{w}x{h}_{cutoff}.evt")
}

fn preview(frame: &Frame) -> CmdResult<GrayImage> {
    let (lo, hi) = frame.min_max();
    Ok(GrayImage::from_values(frame.width, frame.height, &frame.data, lo, hi)?)
}

pub fn run(config: &SimulateConfig, out: &Path) -> CmdResult<Vec<String>> {
    let started = now_unix();
    let r = config.resolve()?;
    let req = CaptureRequest {
        resolutions: config.resolutions.iter().map(|&[w, h]| (w, h)).collect(),
        cutoffs: config.cutoffs.clone(),
        contrast_threshold: config.contrast_threshold,
        frame_rate: config.frame_rate * config.speed_scale,
        warmup: config.warmup_ms * 1e-3,
        t_ref: r.t_start,
        duration: r.duration,
        keep_offsets: vec![0.0, r.duration],
    };
    let cap = capture(&r.setup.scene, &r.k_base, &r.trajectory, &req)?;
    // Everything is computed before the first file is written.
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, &[w, h]) in config.resolutions.iter().enumerate() {
        for (j, &c) in config.cutoffs.iter().enumerate() {
            let mut bytes = Vec::new();
            write_evt(&mut bytes, cap.stream(i, j, config.cutoffs.len()))?;
            files.push((events_file_name(w, h, c), bytes));
        }
    }
    let dir = out_dir(out)?;
    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        evres::io::write_atomic(&dir.join(name), bytes)?;
        outputs.push(name.clone());
    }
    if config.previews {
        for (name, frame) in [("preview_start.pgm", &cap.kept[0]), ("preview_end.pgm", &cap.kept[1])] {
            write_pgm_file(&dir.join(name), &preview(frame)?)?;
            outputs.push(name.to_string());
        }
    }
    let mut manifest = RunManifest::new("simulate", config, config.seed, started)?;
    manifest.scene_hash = Some(config.scene_hash());
    manifest.outputs = outputs.clone();
    manifest.write(&dir)?;
    Ok(outputs)
}
