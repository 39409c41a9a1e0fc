//! `evres reconstruct | flow | track`: per-problem records for one event file.
//!
//! The event file's window is tiled into consecutive problem windows; the
//! reference frames are re-rendered from the scene described by the config.

use std::path::Path;

use evres::eval::protocol::{flow_patch_centers, problem_rng, run_reconstruction, FlowSetup, TrackingSetup};
use evres::eval::Task;
use evres::io::{read_evt_file, write_atomic};
use evres::multiscale::{log_frame, resample_area};
use evres::scene::render_frame;
use evres::sensor::{event_rate, slice_window};
use evres::{Error, EventStream, Frame};
use serde_json::{json, Value};

use crate::common::{json_lines, metric_json, now_unix, out_dir, CmdResult, Failure, Resolved, RunManifest, SimulateConfig};

pub struct TaskInputs<'a> {
    pub config: &'a SimulateConfig,
    pub config_path: Option<&'a Path>,
    pub events: &'a Path,
    pub out: &'a Path,
    /// Overrides the protocol window (speed 1, milliseconds).
    pub window_ms: Option<f64>,
}

fn ns(t: f64) -> u64 {
    (t * 1e9).round() as u64
}

fn base_log(r: &Resolved, t: f64) -> evres::Result<Frame> {
    log_frame(&render_frame(&r.setup.scene, &r.k_base, &r.trajectory.sample(t)?, t)?)
}

fn sensor_log(r: &Resolved, t: f64, w: usize, h: usize) -> evres::Result<Frame> {
    let base = render_frame(&r.setup.scene, &r.k_base, &r.trajectory.sample(t)?, t)?;
    log_frame(&resample_area(&base, w, h)?)
}

fn record(task: Task, window: usize, item: Option<usize>, win: &EventStream, outcome: evres::Result<(f64, Value)>) -> Value {
    let mut v = json!({
        "task": task.name(),
        "window": window,
        "item": item,
        "t_start_ns": win.t_start,
        "t_end_ns": win.t_end,
        "width": win.width,
        "height": win.height,
        "n_events": win.len(),
        "event_rate_mevps": event_rate(win).map(|r| r.total).ok(),
        "metric_name": task.metric_name(),
    });
    match outcome {
        Ok((metric, details)) => {
            v["metric_value"] = metric_json(Some(metric));
            v["error"] = Value::Null;
            v["result"] = details;
        }
        Err(e) => {
            v["metric_value"] = Value::Null;
            v["error"] = e.kind().into();
            v["message"] = e.to_string().into();
        }
    }
    v
}

/// Runs `task` and writes `<task>.jsonl` plus a manifest; returns the records.
pub fn run(task: Task, inp: &TaskInputs) -> CmdResult<Vec<Value>> {
    let started = now_unix();
    let cfg = inp.config;
    let stream = read_evt_file(inp.events)?;
    let r = cfg.resolve()?;
    let [bw, bh] = cfg.base_resolution;
    if stream.width > bw || stream.height > bh {
        return Err(Error::Resolution(format!(
            "events at {}x{} exceed the base resolution {bw}x{bh}",
            stream.width, stream.height
        ))
        .into());
    }
    let speed = cfg.speed_scale;
    let window_s = match task {
        Task::Reconstruction => inp.window_ms.unwrap_or(cfg.reconstruction.window_ms) * 1e-3,
        Task::Flow => inp.window_ms.unwrap_or(cfg.flow.window_ms) * 1e-3,
        Task::Tracking => match inp.window_ms {
            Some(_) => return Err(Failure::config("the tracking window follows from the spline knots")),
            None => cfg.tracking.window(),
        },
    } / speed;
    if !(window_s > 0.0) {
        return Err(Failure::config("window must be positive"));
    }
    let n_windows = (stream.duration_s() / window_s + 1e-6).floor() as usize;
    if n_windows == 0 {
        return Err(Failure::config(format!(
            "event file spans {} s, shorter than one {window_s} s window",
            stream.duration_s()
        )));
    }
    let t_first = stream.t_start as f64 * 1e-9;
    let (w, h) = (stream.width, stream.height);
    let k = r.k_base.rescaled(w, h);
    let mut records = Vec::new();
    for win_idx in 0..n_windows {
        let t0 = t_first + win_idx as f64 * window_s;
        let t1 = t0 + window_s;
        match task {
            Task::Reconstruction => {
                let win = slice_window(&stream, ns(t0), ns(t1) + 1);
                let out = (|| {
                    let key = base_log(&r, t0)?;
                    let target = base_log(&r, t1)?;
                    let p = run_reconstruction(&key, &target, &win, cfg.contrast_threshold, r.setup.scene.log_range())?;
                    Ok((p, json!({ "keyframe_t_s": t0, "target_t_s": t1 })))
                })();
                records.push(record(task, win_idx, None, &win, out));
            }
            Task::Flow => {
                let win = slice_window(&stream, ns(t0), ns(t1));
                let l_ref = sensor_log(&r, t0, w, h)?;
                let setup = FlowSetup {
                    scene: &r.setup.scene,
                    k: &k,
                    trajectory: &r.trajectory,
                    window: &win,
                    l_ref: &l_ref,
                    t_ref: t0,
                    dt: window_s,
                    proto: &cfg.flow,
                };
                for (i, center) in flow_patch_centers(w, h, &cfg.flow).into_iter().enumerate() {
                    if !setup.is_textured(center) {
                        continue;
                    }
                    let mut rng = problem_rng(cfg.seed, Task::Flow, win_idx, i);
                    let out = setup.run(center, &mut rng).map(|o| {
                        let rn = o.rnepe;
                        (rn, serde_json::to_value(&o).unwrap_or(Value::Null))
                    });
                    records.push(record(task, win_idx, Some(i), &win, out));
                }
            }
            Task::Tracking => {
                let win = slice_window(&stream, ns(t0), ns(t1));
                let l_ref = sensor_log(&r, t0, w, h)?;
                let setup = TrackingSetup {
                    scene: &r.setup.scene,
                    k: &k,
                    trajectory: &r.trajectory,
                    window: &win,
                    l_ref: &l_ref,
                    t_ref: t0,
                    speed,
                    contrast_threshold: cfg.contrast_threshold,
                    proto: &cfg.tracking,
                };
                let mut rng = problem_rng(cfg.seed, Task::Tracking, win_idx, 0);
                let out = setup.run(&mut rng).and_then(|res| {
                    let err = res.position_error_mm.ok_or(Error::Diverged)?;
                    let details = json!({
                        "c_hat": res.c_hat,
                        "residual_norm": res.residual_norm,
                        "iterations": res.iterations,
                        "converged": res.converged,
                        "n_residuals": res.n_residuals,
                        "drops": res.drops,
                    });
                    Ok((err, details))
                });
                records.push(record(task, win_idx, None, &win, out));
            }
        }
    }
    let dir = out_dir(inp.out)?;
    let name = format!("{}.jsonl", task.name());
    write_atomic(&dir.join(&name), json_lines(&records).as_bytes())?;
    let mut manifest = RunManifest::new(task.name(), cfg, cfg.seed, started)?;
    manifest.scene_hash = Some(cfg.scene_hash());
    manifest.inputs = std::iter::once(inp.events)
        .chain(inp.config_path)
        .map(|p| p.display().to_string())
        .collect();
    manifest.outputs = vec![name];
    manifest.write(&dir)?;
    let failed = records.iter().filter(|r| !r["error"].is_null()).count();
    if records.is_empty() || failed == records.len() {
        let kinds: Vec<&str> = records.iter().filter_map(|r| r["error"].as_str()).collect();
        let mut f = Failure::numerical(format!("all {} problems failed", records.len()));
        if let Some(first) = kinds.first() {
            f.kind = first.to_string();
        }
        return Err(f);
    }
    Ok(records)
}
