//! Configuration, manifests, failures and output helpers shared by commands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use evres::eval::{FlowProtocol, ReconstructionProtocol, TrackingProtocol};
use evres::geometry::{CameraIntrinsics, CumulativeBSpline};
use evres::io::{sha256_hex, write_atomic};
use evres::scene::{bundled_scene_with_size, speed_scale, SceneSetup, BUNDLED_TEXTURE_SIZE};
use evres::{Cutoff, Error};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "config".into(),
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            kind: "numerical".into(),
            message: message.into(),
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message, "exit_code": self.code }).to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Exit code of a library error: 2 configuration, 3 input format,
/// 4 numerical, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidScale(_) | Error::Resolution(_) | Error::OutOfDomain { .. } => 2,
        Error::Format(_) | Error::Json(_) | Error::TimeOrder(_) => 3,
        Error::Diverged
        | Error::InsufficientEvents(_)
        | Error::InsufficientConstraints(_)
        | Error::InsufficientData(_)
        | Error::ZeroDuration => 4,
        _ => 1,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CmdResult<T> = Result<T, Failure>;

/// Reads a JSON config; syntax and schema errors keep serde's line, column
/// and field diagnostics.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Parses `W`, `WxH` or `W,H`.
pub fn parse_resolution(s: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
    match nums.map_err(|e| format!("invalid resolution '{s}': {e}"))?.as_slice() {
        [w] if *w > 0 => Ok([*w, *w]),
        [w, h] if *w > 0 && *h > 0 => Ok([*w, *h]),
        _ => Err(format!("invalid resolution '{s}'")),
    }
}

pub fn parse_cutoff(s: &str) -> Result<Cutoff, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Scene, trajectory window and sensors for `simulate` and the task commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scene: String,
    pub texture_size: usize,
    pub base_resolution: [usize; 2],
    pub resolutions: Vec<[usize; 2]>,
    pub cutoffs: Vec<Cutoff>,
    pub contrast_threshold: f64,
    /// Frame rate at speed 1; scaled with the speed.
    pub frame_rate: f64,
    pub speed_scale: f64,
    /// Start of the recorded window at speed 1, seconds into the trajectory.
    pub start_s: f64,
    /// Recorded duration at speed 1, milliseconds.
    pub duration_ms: f64,
    pub warmup_ms: f64,
    pub seed: u64,
    /// Write PGM previews of the first and last base frame.
    pub previews: bool,
    pub reconstruction: ReconstructionProtocol,
    pub flow: FlowProtocol,
    pub tracking: TrackingProtocol,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            scene: "rocks".into(),
            texture_size: BUNDLED_TEXTURE_SIZE,
            base_resolution: [1280, 1280],
            resolutions: vec![[1280, 1280]],
            cutoffs: vec![Cutoff::IDEAL],
            contrast_threshold: 0.2,
            frame_rate: 5000.0,
            speed_scale: 1.0,
            start_s: 0.2,
            duration_ms: 50.0,
            warmup_ms: 40.0,
            seed: 0,
            previews: true,
            reconstruction: ReconstructionProtocol::default(),
            flow: FlowProtocol::default(),
            tracking: TrackingProtocol::default(),
        }
    }
}

/// The scene, trajectory and base camera a config resolves to.
pub struct Resolved {
    pub setup: SceneSetup,
    pub trajectory: CumulativeBSpline,
    pub k_base: CameraIntrinsics,
    /// Absolute start of the recorded window, seconds.
    pub t_start: f64,
    /// Recorded duration, seconds (already divided by the speed).
    pub duration: f64,
}

impl SimulateConfig {
    pub fn validate(&self) -> CmdResult<()> {
        if self.resolutions.is_empty() || self.cutoffs.is_empty() {
            return Err(Failure::config("resolutions and cutoffs must be non-empty"));
        }
        let [bw, bh] = self.base_resolution;
        for &[w, h] in &self.resolutions {
            if w == 0 || h == 0 || w > bw || h > bh {
                return Err(Failure::config(format!("resolution {w}x{h} not within base {bw}x{bh}")));
            }
        }
        if !(self.duration_ms > 0.0 && self.start_s >= 0.0 && self.warmup_ms >= 0.0) {
            return Err(Failure::config("duration must be positive; start and warmup non-negative"));
        }
        Ok(())
    }

    pub fn resolve(&self) -> CmdResult<Resolved> {
        self.validate()?;
        let setup = bundled_scene_with_size(&self.scene, self.texture_size)?;
        let trajectory = speed_scale(&setup.trajectory, self.speed_scale)?;
        let [bw, bh] = self.base_resolution;
        let k_base = setup.intrinsics(bw, bh)?;
        let (start, end) = trajectory.domain();
        let t_start = start + self.start_s / self.speed_scale;
        let duration = self.duration_ms * 1e-3 / self.speed_scale;
        if t_start - self.warmup_ms * 1e-3 < start.max(0.0) || t_start + duration + 2.0 / self.frame_rate >= end {
            return Err(Failure::config(format!(
                "window [{t_start}, {}] with warmup does not fit the trajectory [{start}, {end})",
                t_start + duration
            )));
        }
        Ok(Resolved {
            setup,
            trajectory,
            k_base,
            t_start,
            duration,
        })
    }

    /// Hash of the fields that determine the rendered scene content.
    pub fn scene_hash(&self) -> String {
        let v = serde_json::json!({
            "scene": self.scene,
            "texture_size": self.texture_size,
            "base_resolution": self.base_resolution,
            "speed_scale": self.speed_scale,
            "start_s": self.start_s,
            "duration_ms": self.duration_ms,
            "frame_rate": self.frame_rate,
            "warmup_ms": self.warmup_ms,
            "contrast_threshold": self.contrast_threshold,
        });
        sha256_hex(v.to_string().as_bytes())
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the canonical (sorted-key) JSON of `config`.
    pub config_hash: String,
    pub scene_hash: Option<String>,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64, started: f64) -> CmdResult<Self> {
        let config = serde_json::to_value(config).map_err(|e| Failure::from(Error::from(e)))?;
        Ok(RunManifest {
            tool: "evres".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config_hash(&config),
            config,
            scene_hash: None,
            seed,
            started_unix_s: started,
            finished_unix_s: 0.0,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Whether the stored hash matches the stored config.
    pub fn verify(&self) -> bool {
        config_hash(&self.config) == self.config_hash
    }

    pub fn write(mut self, dir: &Path) -> CmdResult<()> {
        self.finished_unix_s = now_unix();
        let json = serde_json::to_vec_pretty(&self).map_err(|e| Failure::from(Error::from(e)))?;
        write_atomic(&dir.join(MANIFEST_NAME), &json)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CmdResult<Option<Self>> {
        let path = dir.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path)?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| Failure::from(Error::Format(format!("{}: {e}", path.display()))))
    }
}

/// Creates `dir` and returns it.
pub fn out_dir(dir: &Path) -> CmdResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// JSON for a metric: a number, `"inf"`/`"-inf"`, or null.
pub fn metric_json(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => x.into(),
        None => serde_json::Value::Null,
    }
}

/// One JSON document per line.
pub fn json_lines(values: &[serde_json::Value]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions_parse() {
        assert_eq!(parse_resolution("346").unwrap(), [346, 346]);
        assert_eq!(parse_resolution("640x480").unwrap(), [640, 480]);
        assert_eq!(parse_resolution("640,480").unwrap(), [640, 480]);
        assert!(parse_resolution("0").is_err());
        assert!(parse_resolution("axb").is_err());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 3);
        assert_eq!(exit_code(&Error::InsufficientEvents("x".into())), 4);
        assert_eq!(exit_code(&Error::OutOfView), 1);
    }

    #[test]
    fn manifest_hash_recomputes() {
        let m = RunManifest::new("simulate", &SimulateConfig::default(), 0, 0.0).unwrap();
        assert!(m.verify());
        let mut bad = m.clone();
        bad.config["seed"] = 5.into();
        assert!(!bad.verify());
    }

    #[test]
    fn unknown_config_fields_are_named() {
        let err = serde_json::from_str::<SimulateConfig>("{\n \"scnee\": \"rocks\"\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scnee") && msg.contains("line 2"), "{msg}");
    }
}
