//! `evres`: multi-resolution event camera simulation and task benchmarks.

mod analyze;
mod common;
mod simulate;
mod sweep;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evres::eval::{SweepConfig, Task};
use evres::Cutoff;

use common::{load_json, parse_cutoff, parse_resolution, CmdResult, Failure, SimulateConfig};

#[derive(Parser)]
#[command(name = "evres", version, about = "Multi-resolution event camera simulation and task benchmarks")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a bundled scene and write one EVT1 file per resolution and cutoff.
    Simulate(SimulateArgs),
    /// Event-integration reconstruction on an EVT1 file.
    Reconstruct(TaskArgs),
    /// Photometric flow on an EVT1 file.
    Flow(TaskArgs),
    /// Photometric pose tracking on an EVT1 file.
    Track(TaskArgs),
    /// Run the scene x resolution x cutoff x speed x task sweep.
    Sweep(SweepArgs),
    /// Inter-event statistics and rate scaling across EVT1 files.
    Analyze(AnalyzeArgs),
}

/// Flags shared by the scene-based commands.
#[derive(Args)]
struct SceneFlags {
    /// JSON config; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sensor resolution, `W` or `WxH`; repeatable.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Vec<[usize; 2]>,
    /// Pixel cutoff in Hz or `inf`; repeatable.
    #[arg(long = "cutoff-hz", value_parser = parse_cutoff)]
    cutoff_hz: Vec<Cutoff>,
    /// Bundled scene name; repeatable for sweeps.
    #[arg(long)]
    scene: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scene: SceneFlags,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "speed-scale")]
    speed_scale: Option<f64>,
    /// Recorded duration at speed 1, milliseconds.
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
}

#[derive(Args)]
struct TaskArgs {
    /// Scene config the events were simulated with.
    #[arg(long)]
    config: Option<PathBuf>,
    /// EVT1 input.
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "speed-scale")]
    speed_scale: Option<f64>,
    /// Problem window at speed 1, milliseconds.
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneFlags,
    #[arg(long)]
    out: PathBuf,
    /// Speed scale; repeatable.
    #[arg(long = "speed-scale")]
    speed_scale: Vec<f64>,
    /// Task name; repeatable.
    #[arg(long)]
    task: Vec<Task>,
    /// Reconstruction and flow window at speed 1, milliseconds.
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
    #[arg(long = "n-problems")]
    n_problems: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// EVT1 files, one per resolution.
    #[arg(required = true)]
    events: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Histogram bins between 10 us and 1 s.
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

fn simulate_config(path: Option<&PathBuf>) -> CmdResult<SimulateConfig> {
    path.map(|p| load_json(p)).unwrap_or_else(|| Ok(SimulateConfig::default()))
}

fn apply_scene_flags(c: &mut SimulateConfig, f: &SceneFlags) -> CmdResult<()> {
    if let Some(s) = f.seed {
        c.seed = s;
    }
    if !f.resolution.is_empty() {
        c.resolutions = f.resolution.clone();
    }
    if !f.cutoff_hz.is_empty() {
        c.cutoffs = f.cutoff_hz.clone();
    }
    match f.scene.as_slice() {
        [] => {}
        [s] => c.scene = s.clone(),
        _ => return Err(Failure::config("simulate takes a single scene")),
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult<()> {
    if let Some(n) = cli.jobs {
        evres::par::set_threads(n)?;
    }
    match cli.command {
        Command::Simulate(a) => {
            let mut c = simulate_config(a.scene.config.as_ref())?;
            apply_scene_flags(&mut c, &a.scene)?;
            if let Some(s) = a.speed_scale {
                c.speed_scale = s;
            }
            if let Some(w) = a.window_ms {
                c.duration_ms = w;
            }
            let files = simulate::run(&c, &a.out)?;
            if cli.verbose {
                eprintln!("wrote {} files to {}", files.len(), a.out.display());
            }
        }
        Command::Reconstruct(a) => run_task(Task::Reconstruction, a)?,
        Command::Flow(a) => run_task(Task::Flow, a)?,
        Command::Track(a) => run_task(Task::Tracking, a)?,
        Command::Sweep(a) => {
            let mut c: SweepConfig = match &a.scene.config {
                Some(p) => load_json(p)?,
                None => SweepConfig::default(),
            };
            if let Some(s) = a.scene.seed {
                c.seed = s;
            }
            if !a.scene.resolution.is_empty() {
                c.resolutions = a.scene.resolution.clone();
            }
            if !a.scene.cutoff_hz.is_empty() {
                c.cutoffs = a.scene.cutoff_hz.clone();
            }
            if !a.scene.scene.is_empty() {
                c.scenes = a.scene.scene.clone();
            }
            if !a.speed_scale.is_empty() {
                c.speed_scales = a.speed_scale.clone();
            }
            if !a.task.is_empty() {
                c.tasks = a.task.clone();
            }
            if let Some(w) = a.window_ms {
                c.reconstruction.window_ms = w;
                c.flow.window_ms = w;
            }
            if let Some(n) = a.n_problems {
                c.n_problems = n;
            }
            let records = sweep::run(&c, &a.out, cli.verbose)?;
            if cli.verbose {
                eprintln!("{} records in {}", records.len(), a.out.display());
            }
        }
        Command::Analyze(a) => {
            let opts = analyze::AnalyzeOptions {
                bins: a.bins,
                ..Default::default()
            };
            analyze::run(&a.events, &a.out, &opts)?;
        }
    }
    Ok(())
}

fn run_task(task: Task, a: TaskArgs) -> CmdResult<()> {
    let mut c = simulate_config(a.config.as_ref())?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(s) = a.speed_scale {
        c.speed_scale = s;
    }
    let inputs = tasks::TaskInputs {
        config: &c,
        config_path: a.config.as_deref(),
        events: &a.events,
        out: &a.out,
        window_ms: a.window_ms,
    };
    tasks::run(task, &inputs).map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code as u8)
        }
    }
}
