//! `evres analyze`: inter-event statistics per resolution and the power-law
//! fit of the per-pixel event rate against relative pixel size.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evres::io::{read_evt_file, write_atomic};
use evres::multiscale::{fit_power_law, interevent_histogram, log_spaced_edges};
use evres::sensor::event_rate;
use evres::Error;
use serde_json::{json, Value};

use crate::common::{now_unix, out_dir, CmdResult, Failure, RunManifest};

pub struct AnalyzeOptions {
    pub bins: usize,
    pub min_gap_s: f64,
    pub max_gap_s: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            bins: 30,
            min_gap_s: 1e-5,
            max_gap_s: 1.0,
        }
    }
}

/// Scene hash from the manifest next to `file`, after checking the manifest.
fn scene_hash_of(file: &Path) -> CmdResult<Option<String>> {
    let dir = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    match RunManifest::read(dir)? {
        None => Ok(None),
        Some(m) if !m.verify() => Err(Error::Format(format!("manifest in {} fails its hash check", dir.display())).into()),
        Some(m) => Ok(m.scene_hash),
    }
}

pub fn run(files: &[PathBuf], out: &Path, opts: &AnalyzeOptions) -> CmdResult<Value> {
    let started = now_unix();
    if files.is_empty() {
        return Err(Failure::config("no event files given"));
    }
    let mut scene: Option<String> = None;
    for f in files {
        if let Some(h) = scene_hash_of(f)? {
            match &scene {
                Some(s) if *s != h => {
                    return Err(Error::Format(format!("{} comes from a different scene", f.display())).into())
                }
                _ => scene = Some(h),
            }
        }
    }
    let edges = log_spaced_edges(opts.min_gap_s, opts.max_gap_s, opts.bins);
    let streams = files.iter().map(|f| read_evt_file(f)).collect::<evres::Result<Vec<_>>>()?;
    let max_width = streams.iter().map(|s| s.width).max().unwrap_or(1) as f64;
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    let mut csv = String::from("file,width,height,bin_lo_s,bin_hi_s,count\n");
    for (f, s) in files.iter().zip(&streams) {
        let rate = event_rate(s)?;
        let hist = interevent_histogram(s, &edges);
        let pixel_size = max_width / s.width as f64;
        if rate.per_pixel > 0.0 {
            samples.push((pixel_size, rate.per_pixel));
        }
        for (i, c) in hist.counts.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{:.16e},{:.16e},{c}", f.display(), s.width, s.height, edges[i], edges[i + 1]);
        }
        entries.push(json!({
            "file": f.display().to_string(),
            "width": s.width,
            "height": s.height,
            "pixel_size": pixel_size,
            "events": s.len(),
            "duration_s": s.duration_s(),
            "event_rate_mevps": rate.total,
            "per_pixel_rate": rate.per_pixel,
            "median_interevent_s": hist.median,
            "histogram": {
                "edges_s": hist.edges,
                "counts": hist.counts,
                "below": hist.below,
                "above": hist.above,
                "n_gaps": hist.n_gaps,
            },
        }));
    }
    let fit = match fit_power_law(&samples) {
        Ok(f) => json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared, "quantity": "per_pixel_rate" }),
        Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
    };
    let report = json!({ "resolutions": entries, "fit": fit, "scene_hash": scene });
    let dir = out_dir(out)?;
    let pretty = serde_json::to_vec_pretty(&report).map_err(|e| Failure::from(Error::from(e)))?;
    write_atomic(&dir.join("analysis.json"), &pretty)?;
    write_atomic(&dir.join("histograms.csv"), csv.as_bytes())?;
    let mut manifest = RunManifest::new("analyze", &json!({ "bins": opts.bins, "min_gap_s": opts.min_gap_s, "max_gap_s": opts.max_gap_s }), 0, started)?;
    manifest.scene_hash = scene;
    manifest.inputs = files.iter().map(|f| f.display().to_string()).collect();
    manifest.outputs = vec!["analysis.json".into(), "histograms.csv".into()];
    manifest.write(&dir)?;
    Ok(report)
}
