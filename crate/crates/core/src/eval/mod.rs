//! Metrics, the resolution x cutoff x speed sweep and tradeoff curves.

pub mod curves;
pub mod metrics;
pub mod protocol;
pub mod sweep;

pub use curves::{curves_from_csv, curves_svg, curves_to_csv, records_to_csv, summary_table, tradeoff_curves, Curve, CurvePoint};
pub use protocol::{FlowProtocol, ReconstructionProtocol, Task, TrackingProtocol};
pub use metrics::{position_error, psnr, rnepe};
pub use sweep::{default_cache_dir, run_sweep, run_sweep_cached, BenchmarkRecord, SweepConfig};
