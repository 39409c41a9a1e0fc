//! The scene x resolution x cutoff x speed x task sweep.
//!
//! For every (scene, speed) group, problem windows start every
//! `problem_stride_s / s` seconds. Each window is rendered once at the base
//! resolution and feeds every (resolution, cutoff) sensor; the tasks then
//! run on the resulting streams. A cell's metric is the median over its
//! successful estimates; failures are counted by error kind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use super::protocol::{FlowProtocol, ReconstructionProtocol, Task, TrackingProtocol};
use super::protocol::{flow_patch_centers, problem_rng, run_reconstruction, FlowSetup, TrackingSetup};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CumulativeBSpline};
use crate::io::{sha256_hex, write_atomic};
use crate::multiscale::{interevent_gaps, median};
use crate::par;
use crate::pipeline::{capture, Capture, CaptureRequest};
use crate::scene::{bundled_scene_with_size, speed_scale, SceneSetup, BUNDLED_TEXTURE_SIZE};
use crate::sensor::{slice_window, Cutoff, EventStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub scenes: Vec<String>,
    pub resolutions: Vec<[usize; 2]>,
    pub base_resolution: [usize; 2],
    pub cutoffs: Vec<Cutoff>,
    pub speed_scales: Vec<f64>,
    pub tasks: Vec<Task>,
    pub seed: u64,
    /// Problem windows per (scene, speed) group.
    pub n_problems: usize,
    /// Spacing of problem windows at speed 1, seconds.
    pub problem_stride_s: f64,
    /// Start of the first window at speed 1, seconds into the trajectory.
    pub first_problem_s: f64,
    /// Filter settling time simulated before each window, milliseconds.
    pub warmup_ms: f64,
    pub contrast_threshold: f64,
    /// Base frame rate at speed 1; scaled with the speed.
    pub frame_rate: f64,
    pub texture_size: usize,
    pub reconstruction: ReconstructionProtocol,
    pub flow: FlowProtocol,
    pub tracking: TrackingProtocol,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            scenes: vec!["rocks".into(), "carpet".into(), "tiles".into()],
            resolutions: [128, 240, 346, 640, 1280].iter().map(|&w| [w, w]).collect(),
            base_resolution: [1280, 1280],
            cutoffs: vec![Cutoff::IDEAL, Cutoff(200.0), Cutoff(50.0)],
            speed_scales: vec![1.0, 1.3, 2.0],
            tasks: Task::ALL.to_vec(),
            seed: 0,
            n_problems: 20,
            problem_stride_s: 0.5,
            first_problem_s: 0.2,
            warmup_ms: 40.0,
            contrast_threshold: 0.2,
            frame_rate: 5000.0,
            texture_size: BUNDLED_TEXTURE_SIZE,
            reconstruction: ReconstructionProtocol::default(),
            flow: FlowProtocol::default(),
            tracking: TrackingProtocol::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Error::Config(format!("sweep config has no {what}"));
        if self.scenes.is_empty() {
            return Err(empty("scenes"));
        }
        if self.resolutions.is_empty() {
            return Err(empty("resolutions"));
        }
        if self.cutoffs.is_empty() {
            return Err(empty("cutoffs"));
        }
        if self.speed_scales.is_empty() {
            return Err(empty("speed_scales"));
        }
        if self.tasks.is_empty() {
            return Err(empty("tasks"));
        }
        if self.n_problems == 0 {
            return Err(empty("problems"));
        }
        let [bw, bh] = self.base_resolution;
        for &[w, h] in &self.resolutions {
            if w == 0 || h == 0 || w > bw || h > bh || w > u16::MAX as usize || h > u16::MAX as usize {
                return Err(Error::Config(format!("resolution {w}x{h} not within base {bw}x{bh}")));
            }
        }
        for c in &self.cutoffs {
            if !(c.0 > 0.0) {
                return Err(Error::Config(format!("cutoff {} must be positive", c.0)));
            }
        }
        for &s in &self.speed_scales {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidScale(s));
            }
        }
        let positive = [
            ("problem_stride_s", self.problem_stride_s),
            ("contrast_threshold", self.contrast_threshold),
            ("frame_rate", self.frame_rate),
            ("reconstruction.window_ms", self.reconstruction.window_ms),
            ("flow.window_ms", self.flow.window_ms),
            ("tracking.knot_spacing_ms", self.tracking.knot_spacing_ms),
            ("tracking.error_rate_hz", self.tracking.error_rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.warmup_ms >= 0.0 && self.first_problem_s >= 0.0 && self.flow.init_sigma_px >= 0.0) {
            return Err(Error::Config("warmup, first problem time and noise must be non-negative".into()));
        }
        if !(self.flow.margin >= 0.0 && self.flow.margin < 0.5) || self.flow.grid.contains(&0) {
            return Err(Error::Config("flow grid must be non-empty with margin in [0, 0.5)".into()));
        }
        if self.tracking.n_controls < 4 {
            return Err(Error::Config("tracking needs at least 4 control poses".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// The sub-config of one (scene, speed) group.
    fn group(&self, scene: &str, speed: f64) -> SweepConfig {
        SweepConfig {
            scenes: vec![scene.to_string()],
            speed_scales: vec![speed],
            ..self.clone()
        }
    }

    fn window(&self, task: Task) -> f64 {
        match task {
            Task::Reconstruction => self.reconstruction.window_ms * 1e-3,
            Task::Flow => self.flow.window_ms * 1e-3,
            Task::Tracking => self.tracking.window(),
        }
    }
}

/// One (scene, task, resolution, cutoff, speed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub scene: String,
    pub task: Task,
    pub width: usize,
    pub height: usize,
    pub cutoff: Cutoff,
    pub speed_scale: f64,
    pub metric_name: String,
    /// Median over successful estimates; `None` if every estimate failed.
    #[serde(with = "float_or_tag")]
    pub metric_value: Option<f64>,
    /// Mev/s over the streams the task consumed.
    pub event_rate: f64,
    /// ev/s per pixel.
    pub per_pixel_rate: f64,
    /// Median same-pixel inter-event time over the consumed streams, seconds.
    pub median_interevent_s: Option<f64>,
    pub n_problems: usize,
    pub n_estimates: usize,
    pub n_failed: usize,
    pub drop_fraction: f64,
    /// Failure counts by error kind.
    pub errors: BTreeMap<String, usize>,
}

/// Serializes infinities as the strings `"inf"` / `"-inf"`.
mod float_or_tag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Tag(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(de::Error::custom(format!("invalid metric value '{other}'"))),
            },
        }
    }
}

/// Accumulates one cell's outcomes across problem windows.
#[derive(Debug, Clone, Default)]
struct CellAccumulator {
    values: Vec<f64>,
    errors: BTreeMap<String, usize>,
    events: usize,
    duration: f64,
    gaps: Vec<f64>,
    attempts: usize,
}

impl CellAccumulator {
    fn consume(&mut self, stream: &EventStream) {
        self.events += stream.len();
        self.duration += stream.duration_s();
        self.gaps.extend(interevent_gaps(stream));
    }

    fn outcome(&mut self, r: Result<f64>) {
        self.attempts += 1;
        match r {
            Ok(v) => self.values.push(v),
            Err(e) => *self.errors.entry(e.kind().to_string()).or_default() += 1,
        }
    }

    fn merge(&mut self, other: CellAccumulator) {
        self.values.extend(other.values);
        for (k, n) in other.errors {
            *self.errors.entry(k).or_default() += n;
        }
        self.events += other.events;
        self.duration += other.duration;
        self.gaps.extend(other.gaps);
        self.attempts += other.attempts;
    }
}

/// Resolves the cache directory: `EVRES_CACHE_DIR` if set.
pub fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os("EVRES_CACHE_DIR").filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Runs the sweep without caching.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<BenchmarkRecord>> {
    run_sweep_cached(config, None, &mut |_| {})
}

/// Runs the sweep; finished (scene, speed) groups are stored under
/// `cache_dir` keyed by their config hash and reused on later runs.
/// `progress` receives one line per group.
pub fn run_sweep_cached(
    config: &SweepConfig,
    cache_dir: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<BenchmarkRecord>> {
    config.validate()?;
    let setups = config
        .scenes
        .iter()
        .map(|s| bundled_scene_with_size(s, config.texture_size))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for setup in &setups {
        for &speed in &config.speed_scales {
            let group = config.group(&setup.scene.name, speed);
            let key = group.hash();
            let path = cache_dir.map(|d| d.join(format!("{key}.json")));
            if let Some(p) = path.as_ref().filter(|p| p.exists()) {
                let cached: Vec<BenchmarkRecord> = serde_json::from_slice(&std::fs::read(p)?)?;
                progress(&format!("{} speed {speed}: cached", setup.scene.name));
                records.extend(cached);
                continue;
            }
            let group_records = run_group(&group, setup, speed)?;
            if let Some(p) = path {
                std::fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
                write_atomic(&p, &serde_json::to_vec(&group_records)?)?;
            }
            progress(&format!("{} speed {speed}: {} records", setup.scene.name, group_records.len()));
            records.extend(group_records);
        }
    }
    Ok(records)
}

/// Start times of the problem windows of a group.
fn problem_times(config: &SweepConfig, spline: &CumulativeBSpline, speed: f64) -> Result<Vec<f64>> {
    let (start, end) = spline.domain();
    let longest = config.tasks.iter().map(|&t| config.window(t)).fold(0.0, f64::max) / speed;
    let warmup = config.warmup_ms * 1e-3;
    let times: Vec<f64> = (0..config.n_problems)
        .map(|k| start + (config.first_problem_s + k as f64 * config.problem_stride_s) / speed)
        .collect();
    let first = times[0];
    let last = *times.last().expect("n_problems > 0");
    if first - warmup < start.max(0.0) || last + longest + 2.0 / (config.frame_rate * speed) >= end {
        return Err(Error::Config(format!(
            "{} problems every {} s do not fit the trajectory [{start}, {end}) at speed {speed}",
            config.n_problems, config.problem_stride_s
        )));
    }
    Ok(times)
}

fn run_group(config: &SweepConfig, setup: &SceneSetup, speed: f64) -> Result<Vec<BenchmarkRecord>> {
    let spline = speed_scale(&setup.trajectory, speed)?;
    let times = problem_times(config, &spline, speed)?;
    let [bw, bh] = config.base_resolution;
    let k_base = setup.intrinsics(bw, bh)?;
    let n_res = config.resolutions.len();
    let n_cut = config.cutoffs.len();
    let n_cells = config.tasks.len() * n_res * n_cut;
    let mut acc = vec![CellAccumulator::default(); n_cells];
    for (problem, &t_ref) in times.iter().enumerate() {
        let windows: Vec<f64> = config.tasks.iter().map(|&t| config.window(t) / speed).collect();
        let recon_window = config.reconstruction.window_ms * 1e-3 / speed;
        let keep = if config.tasks.contains(&Task::Reconstruction) { vec![0.0, recon_window] } else { vec![0.0] };
        let req = CaptureRequest {
            resolutions: config.resolutions.iter().map(|&[w, h]| (w, h)).collect(),
            cutoffs: config.cutoffs.clone(),
            contrast_threshold: config.contrast_threshold,
            frame_rate: config.frame_rate * speed,
            warmup: config.warmup_ms * 1e-3,
            t_ref,
            duration: windows.iter().copied().fold(0.0, f64::max),
            keep_offsets: keep,
        };
        let cap = capture(&setup.scene, &k_base, &spline, &req)?;
        let ctx = ProblemContext {
            config,
            setup,
            spline: &spline,
            k_base: &k_base,
            cap: &cap,
            t_ref,
            speed,
            problem,
        };
        let jobs: Vec<(usize, usize, usize)> = (0..config.tasks.len())
            .flat_map(|ti| (0..n_res).flat_map(move |ri| (0..n_cut).map(move |ci| (ti, ri, ci))))
            .collect();
        let outcomes = par::map(&jobs, |&(ti, ri, ci)| ctx.run_cell(config.tasks[ti], ri, ci));
        for (cell, out) in acc.iter_mut().zip(outcomes) {
            cell.merge(out);
        }
    }
    let mut records = Vec::with_capacity(n_cells);
    for (i, mut cell) in acc.into_iter().enumerate() {
        let task = config.tasks[i / (n_res * n_cut)];
        let [w, h] = config.resolutions[(i / n_cut) % n_res];
        let cutoff = config.cutoffs[i % n_cut];
        let rate = if cell.duration > 0.0 { cell.events as f64 / cell.duration } else { 0.0 };
        let n_failed = cell.attempts - cell.values.len();
        records.push(BenchmarkRecord {
            scene: setup.scene.name.clone(),
            task,
            width: w,
            height: h,
            cutoff,
            speed_scale: speed,
            metric_name: task.metric_name().into(),
            metric_value: median(&mut cell.values),
            event_rate: rate / 1e6,
            per_pixel_rate: rate / (w * h) as f64,
            median_interevent_s: median(&mut cell.gaps),
            n_problems: times.len(),
            n_estimates: cell.attempts,
            n_failed,
            drop_fraction: if cell.attempts > 0 { n_failed as f64 / cell.attempts as f64 } else { 0.0 },
            errors: cell.errors,
        });
    }
    Ok(records)
}

struct ProblemContext<'a> {
    config: &'a SweepConfig,
    setup: &'a SceneSetup,
    spline: &'a CumulativeBSpline,
    k_base: &'a CameraIntrinsics,
    cap: &'a Capture,
    t_ref: f64,
    speed: f64,
    problem: usize,
}

fn ns(t: f64) -> u64 {
    (t * 1e9).round() as u64
}

impl ProblemContext<'_> {
    fn run_cell(&self, task: Task, ri: usize, ci: usize) -> CellAccumulator {
        let stream = self.cap.stream(ri, ci, self.config.cutoffs.len());
        let mut acc = CellAccumulator::default();
        match task {
            Task::Reconstruction => self.reconstruction(stream, &mut acc),
            Task::Flow => self.flow(stream, ri, &mut acc),
            Task::Tracking => self.tracking(stream, ri, &mut acc),
        }
        acc
    }

    fn reconstruction(&self, stream: &EventStream, acc: &mut CellAccumulator) {
        let keyframe = &self.cap.kept[0];
        let target = &self.cap.kept[1];
        let window = slice_window(stream, ns(self.t_ref), ns(target.timestamp) + 1);
        acc.consume(&window);
        let peak = self.setup.scene.log_range();
        acc.outcome(run_reconstruction(keyframe, target, &window, self.config.contrast_threshold, peak));
    }

    fn flow(&self, stream: &EventStream, ri: usize, acc: &mut CellAccumulator) {
        let dt = self.config.flow.window_ms * 1e-3 / self.speed;
        let window = slice_window(stream, ns(self.t_ref), ns(self.t_ref + dt));
        acc.consume(&window);
        let l_ref = &self.cap.ref_logs[ri];
        let k = self.k_base.rescaled(l_ref.width, l_ref.height);
        let setup = FlowSetup {
            scene: &self.setup.scene,
            k: &k,
            trajectory: self.spline,
            window: &window,
            l_ref,
            t_ref: self.t_ref,
            dt,
            proto: &self.config.flow,
        };
        for (i, center) in flow_patch_centers(l_ref.width, l_ref.height, &self.config.flow).into_iter().enumerate() {
            if !setup.is_textured(center) {
                continue;
            }
            let mut rng = problem_rng(self.config.seed, Task::Flow, self.problem, i);
            acc.outcome(setup.run(center, &mut rng).map(|o| o.rnepe));
        }
    }

    fn tracking(&self, stream: &EventStream, ri: usize, acc: &mut CellAccumulator) {
        let window = slice_window(stream, ns(self.t_ref), ns(self.t_ref + self.config.tracking.window() / self.speed));
        acc.consume(&window);
        let l_ref = &self.cap.ref_logs[ri];
        let k = self.k_base.rescaled(l_ref.width, l_ref.height);
        let setup = TrackingSetup {
            scene: &self.setup.scene,
            k: &k,
            trajectory: self.spline,
            window: &window,
            l_ref,
            t_ref: self.t_ref,
            speed: self.speed,
            contrast_threshold: self.config.contrast_threshold,
            proto: &self.config.tracking,
        };
        let mut rng = problem_rng(self.config.seed, Task::Tracking, self.problem, 0);
        acc.outcome(setup.run(&mut rng).and_then(|r| r.position_error_mm.ok_or(Error::Diverged)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            scenes: vec!["rocks".into()],
            resolutions: vec![[32, 32], [16, 16]],
            base_resolution: [32, 32],
            cutoffs: vec![Cutoff::IDEAL],
            speed_scales: vec![1.0],
            tasks: vec![Task::Reconstruction],
            n_problems: 2,
            frame_rate: 1000.0,
            warmup_ms: 5.0,
            texture_size: 128,
            reconstruction: ReconstructionProtocol { window_ms: 10.0 },
            ..Default::default()
        }
    }

    #[test]
    fn defaults_cover_the_full_grid() {
        let c = SweepConfig::default();
        c.validate().unwrap();
        assert_eq!(c.resolutions.len(), 5);
        assert_eq!(c.cutoffs.len(), 3);
        assert!(c.cutoffs[0].is_ideal());
        assert_eq!(c.speed_scales, vec![1.0, 1.3, 2.0]);
        assert_eq!(c.contrast_threshold, 0.2);
        assert_eq!(c.tracking.window(), 0.014);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny_config();
        c.resolutions.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny_config();
        c.resolutions.push([64, 64]);
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.speed_scales = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.n_problems = 100;
        assert!(matches!(run_sweep(&c), Err(Error::Config(_))));
        assert!(serde_json::from_str::<SweepConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_json_round_trip_and_hash() {
        let c = tiny_config();
        let json = serde_json::to_string(&c).unwrap();
        let back: SweepConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(d.hash(), c.hash());
        let partial: SweepConfig = serde_json::from_str(r#"{"cutoffs": ["inf", 50], "tasks": ["flow"]}"#).unwrap();
        assert_eq!(partial.cutoffs, vec![Cutoff::IDEAL, Cutoff(50.0)]);
        assert_eq!(partial.tasks, vec![Task::Flow]);
    }

    #[test]
    fn one_record_per_cell_and_deterministic() {
        let c = tiny_config();
        let a = run_sweep(&c).unwrap();
        assert_eq!(a.len(), 2);
        for r in &a {
            assert_eq!(r.n_problems, 2);
            assert_eq!(r.n_estimates, 2);
            assert!((0.0..=1.0).contains(&r.drop_fraction));
            assert!(r.metric_value.is_some());
        }
        let b = run_sweep(&c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn cache_reuses_groups() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny_config();
        let mut lines = Vec::new();
        let a = run_sweep_cached(&c, Some(dir.path()), &mut |l| lines.push(l.to_string())).unwrap();
        let b = run_sweep_cached(&c, Some(dir.path()), &mut |l| lines.push(l.to_string())).unwrap();
        assert_eq!(a, b);
        assert!(lines[1].ends_with("cached"));
    }

    #[test]
    fn infinite_metric_serializes_as_tag() {
        let r = BenchmarkRecord {
            scene: "rocks".into(),
            task: Task::Reconstruction,
            width: 1,
            height: 1,
            cutoff: Cutoff::IDEAL,
            speed_scale: 1.0,
            metric_name: "psnr_db".into(),
            metric_value: Some(f64::INFINITY),
            event_rate: 0.0,
            per_pixel_rate: 0.0,
            median_interevent_s: None,
            n_problems: 1,
            n_estimates: 1,
            n_failed: 0,
            drop_fraction: 0.0,
            errors: BTreeMap::new(),
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""metric_value":"inf""#));
        assert!(json.contains(r#""cutoff":"inf""#));
        let back: BenchmarkRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
