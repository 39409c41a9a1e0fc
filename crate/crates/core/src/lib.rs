//! Multi-resolution event camera simulation and downstream task benchmarks.
//!
//! A planar textured scene is rendered at a high base resolution along a
//! continuous-time camera trajectory, box-filtered down to a set of sensor
//! resolutions with a shared field of view, and converted to events by an
//! ideal or bandwidth-limited pixel model. The event streams then feed
//! image reconstruction, photometric flow and photometric pose tracking,
//! whose accuracy is tabulated against event rate.

pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod multiscale;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod sensor;
pub mod tasks;
pub mod textures;

pub use error::{Error, Result};
pub use frame::{Frame, FrameKind};
pub use sensor::{Cutoff, Event, EventStream, SensorConfig};
