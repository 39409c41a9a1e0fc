//! Tradeoff curves (event rate against task metric), their CSV form, SVG
//! figures and the resolution x cutoff summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sweep::{BenchmarkRecord, Task};
use crate::error::{Error, Result};
use crate::sensor::Cutoff;

/// One point per speed for a fixed (scene, task, cutoff, resolution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub scene: String,
    pub task: Task,
    pub cutoff: Cutoff,
    pub width: usize,
    pub height: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub speed_scale: f64,
    /// Mev/s.
    pub event_rate: f64,
    pub metric: f64,
}

fn cutoff_key(c: Cutoff) -> u64 {
    // Orders ideal first, then decreasing bandwidth.
    u64::MAX - c.0.to_bits()
}

/// Groups records into polylines ordered by speed. Cells without a metric
/// are left out.
pub fn tradeoff_curves(records: &[BenchmarkRecord]) -> Result<Vec<Curve>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    let mut groups: BTreeMap<(String, Task, u64, usize, usize), Curve> = BTreeMap::new();
    for r in records {
        let Some(metric) = r.metric_value else { continue };
        let key = (r.scene.clone(), r.task, cutoff_key(r.cutoff), r.width, r.height);
        groups
            .entry(key)
            .or_insert_with(|| Curve {
                scene: r.scene.clone(),
                task: r.task,
                cutoff: r.cutoff,
                width: r.width,
                height: r.height,
                points: Vec::new(),
            })
            .points
            .push(CurvePoint {
                speed_scale: r.speed_scale,
                event_rate: r.event_rate,
                metric,
            });
    }
    let mut curves: Vec<Curve> = groups.into_values().collect();
    for c in &mut curves {
        c.points.sort_by(|a, b| a.speed_scale.total_cmp(&b.speed_scale));
    }
    Ok(curves)
}

const CURVE_HEADER: &str = "scene,task,cutoff_hz,width,height,speed_scale,event_rate_mevps,metric";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per point, floats with 17 significant digits.
pub fn curves_to_csv(curves: &[Curve]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.scene,
                c.task.name(),
                c.cutoff,
                c.width,
                c.height,
                num(p.speed_scale),
                num(p.event_rate),
                num(p.metric)
            );
        }
    }
    s
}

pub fn curves_from_csv(text: &str) -> Result<Vec<Curve>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Format("unexpected curve CSV header".into()));
    }
    let mut curves: Vec<Curve> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |what: &str| Error::Format(format!("curve CSV line {}: bad {what}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        let float = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let task: Task = f[1].parse().map_err(|_| bad("task"))?;
        let cutoff: Cutoff = f[2].parse().map_err(|_| bad("cutoff"))?;
        let width: usize = f[3].parse().map_err(|_| bad("width"))?;
        let height: usize = f[4].parse().map_err(|_| bad("height"))?;
        let point = CurvePoint {
            speed_scale: float(f[5], "speed")?,
            event_rate: float(f[6], "event rate")?,
            metric: float(f[7], "metric")?,
        };
        match curves.last_mut() {
            Some(c) if c.scene == f[0] && c.task == task && c.cutoff == cutoff && c.width == width && c.height == height => {
                c.points.push(point)
            }
            _ => curves.push(Curve {
                scene: f[0].to_string(),
                task,
                cutoff,
                width,
                height,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

const RECORD_HEADER: &str = "scene,task,width,height,cutoff_hz,speed_scale,metric_name,metric_value,event_rate_mevps,per_pixel_rate,median_interevent_s,n_problems,n_estimates,n_failed,drop_fraction";

/// Aggregate CSV of sweep records.
pub fn records_to_csv(records: &[BenchmarkRecord]) -> String {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut s = String::from(RECORD_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scene,
            r.task.name(),
            r.width,
            r.height,
            r.cutoff,
            num(r.speed_scale),
            r.metric_name,
            opt(r.metric_value),
            num(r.event_rate),
            num(r.per_pixel_rate),
            opt(r.median_interevent_s),
            r.n_problems,
            r.n_estimates,
            r.n_failed,
            num(r.drop_fraction)
        );
    }
    s
}

/// Markdown table for one (scene, task, speed): rows are resolutions,
/// columns are cutoffs; each cell shows the metric and the event rate.
pub fn summary_table(records: &[BenchmarkRecord], scene: &str, task: Task, speed_scale: f64) -> String {
    let sel: Vec<&BenchmarkRecord> = records
        .iter()
        .filter(|r| r.scene == scene && r.task == task && r.speed_scale == speed_scale)
        .collect();
    let mut cutoffs: Vec<Cutoff> = Vec::new();
    let mut resolutions: Vec<(usize, usize)> = Vec::new();
    for r in &sel {
        if !cutoffs.contains(&r.cutoff) {
            cutoffs.push(r.cutoff);
        }
        if !resolutions.contains(&(r.width, r.height)) {
            resolutions.push((r.width, r.height));
        }
    }
    cutoffs.sort_by_key(|&c| cutoff_key(c));
    resolutions.sort();
    let mut s = format!("### {scene} / {} ({}) at speed {speed_scale}\n\n| resolution |", task.name(), task.metric_name());
    for c in &cutoffs {
        let _ = write!(s, " {} Hz |", c);
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(cutoffs.len()));
    s.push('\n');
    for &(w, h) in &resolutions {
        let _ = write!(s, "| {w}x{h} |");
        for &c in &cutoffs {
            let cell = sel.iter().find(|r| (r.width, r.height) == (w, h) && r.cutoff == c);
            match cell {
                Some(r) => match r.metric_value {
                    Some(v) => {
                        let _ = write!(s, " {v:.3} ({:.3} Mev/s) |", r.event_rate);
                    }
                    None => s.push_str(" failed |"),
                },
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Scatter/polyline figure of every curve of one (scene, task): log event
/// rate on x, metric on y. Color encodes resolution, dash pattern encodes
/// cutoff.
pub fn curves_svg(curves: &[Curve], scene: &str, task: Task) -> Result<String> {
    let sel: Vec<&Curve> = curves.iter().filter(|c| c.scene == scene && c.task == task).collect();
    let pts: Vec<(f64, f64)> = sel
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|p| p.event_rate > 0.0 && p.metric.is_finite())
        .map(|p| (p.event_rate.log10(), p.metric))
        .collect();
    if pts.is_empty() {
        return Err(Error::InsufficientData(format!("no finite points for {scene}/{}", task.name())));
    }
    let (w, h, m) = (640.0, 420.0, 60.0);
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {} H{} M{m} {} V{m}" stroke="black" fill="none"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">log10 event rate [Mev/s] ({:.2} .. {:.2})</text>"#,
        w / 2.0,
        h - 20.0,
        x0,
        x1
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">{} ({:.2} .. {:.2})</text>"#,
        h / 2.0,
        h / 2.0,
        task.metric_name(),
        y0,
        y1
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{scene} / {}</text>"#, w / 2.0, task.name());
    let mut resolutions: Vec<(usize, usize)> = sel.iter().map(|c| (c.width, c.height)).collect();
    resolutions.sort();
    resolutions.dedup();
    let mut cutoffs: Vec<Cutoff> = sel.iter().map(|c| c.cutoff).collect();
    cutoffs.sort_by_key(|&c| cutoff_key(c));
    cutoffs.dedup();
    for c in &sel {
        let color = PALETTE[resolutions.iter().position(|&r| r == (c.width, c.height)).unwrap_or(0) % PALETTE.len()];
        let dash = ["", "6 3", "2 3", "8 3 2 3"][cutoffs.iter().position(|&k| k == c.cutoff).unwrap_or(0) % 4];
        let p: Vec<(f64, f64)> = c
            .points
            .iter()
            .filter(|p| p.event_rate > 0.0 && p.metric.is_finite())
            .map(|p| (sx(p.event_rate.log10()), sy(p.metric)))
            .collect();
        if p.len() > 1 {
            let path: Vec<String> = p.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" stroke="{color}" stroke-dasharray="{dash}" fill="none"/>"#,
                path.join(" ")
            );
        }
        for (x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
    }
    for (i, (rw, rh)) in resolutions.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{}">{rw}x{rh}</text>"#,
            w - m + 5.0,
            m + 14.0 * i as f64,
            PALETTE[i % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
