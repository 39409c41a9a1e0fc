//! `evres sweep`: records, curves, figures and summary tables.

use std::path::Path;

use evres::eval::{
    curves_svg, curves_to_csv, default_cache_dir, records_to_csv, run_sweep_cached, summary_table, tradeoff_curves,
    BenchmarkRecord, SweepConfig,
};
use evres::io::write_atomic;

use crate::common::{now_unix, out_dir, CmdResult, Failure, RunManifest};

pub const RECORDS_FILE: &str = "records.jsonl";

pub fn run(config: &SweepConfig, out: &Path, verbose: bool) -> CmdResult<Vec<BenchmarkRecord>> {
    let started = now_unix();
    config.validate()?;
    let dir = out_dir(out)?;
    let cache = default_cache_dir().unwrap_or_else(|| dir.join("cache"));
    let records = run_sweep_cached(config, Some(&cache), &mut |line| {
        if verbose {
            eprintln!("{line}");
        }
    })?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r).map_err(|e| Failure::from(evres::Error::from(e)))?);
        jsonl.push('\n');
    }
    files.push((RECORDS_FILE.into(), jsonl.into_bytes()));
    files.push(("records.csv".into(), records_to_csv(&records).into_bytes()));
    let curves = tradeoff_curves(&records)?;
    files.push(("curves.csv".into(), curves_to_csv(&curves).into_bytes()));
    let mut summary = String::from("# Sweep summary\n\nEach cell: median metric (event rate).\n\n");
    for scene in &config.scenes {
        for &task in &config.tasks {
            if let Ok(svg) = curves_svg(&curves, scene, task) {
                files.push((format!("curves_{scene}_{}.svg", task.name()), svg.into_bytes()));
            }
            for &s in &config.speed_scales {
                summary.push_str(&summary_table(&records, scene, task, s));
                summary.push('\n');
            }
        }
    }
    files.push(("summary.md".into(), summary.into_bytes()));
    let mut manifest = RunManifest::new("sweep", config, config.seed, started)?;
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
        manifest.outputs.push(name.clone());
    }
    manifest.write(&dir)?;
    if records.iter().all(|r| r.metric_value.is_none()) {
        return Err(Failure::numerical("every cell failed"));
    }
    Ok(records)
}
