//! Event integration: a keyframe plus the per-pixel sum of `C * polarity`,
//! brought to the keyframe resolution by area resampling.

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind};
use crate::multiscale::resample_area;
use crate::sensor::EventStream;

/// Per-pixel `C * sum(polarity)` at the event resolution.
pub fn event_increment(events: &EventStream, c: f64) -> Frame {
    let mut data = vec![0.0; events.width * events.height];
    for e in &events.events {
        data[e.y as usize * events.width + e.x as usize] += c * e.polarity as f64;
    }
    Frame {
        width: events.width,
        height: events.height,
        timestamp: events.t_end as f64 * 1e-9,
        kind: FrameKind::LogIntensity,
        data,
    }
}

/// Log frame predicted at the end of `events` from the keyframe.
pub fn ei_reconstruct(keyframe: &Frame, events: &EventStream, c: f64) -> Result<Frame> {
    if keyframe.kind != FrameKind::LogIntensity {
        return Err(Error::Config("the keyframe must be a log-intensity frame".into()));
    }
    if events.width > keyframe.width || events.height > keyframe.height {
        return Err(Error::Resolution(format!(
            "events at {}x{} exceed the keyframe resolution {}x{}",
            events.width, events.height, keyframe.width, keyframe.height
        )));
    }
    let inc = event_increment(events, c);
    let up = resample_area(&inc, keyframe.width, keyframe.height)?;
    let data = keyframe.data.iter().zip(&up.data).map(|(k, d)| k + d).collect();
    Ok(Frame {
        width: keyframe.width,
        height: keyframe.height,
        timestamp: events.t_end as f64 * 1e-9,
        kind: FrameKind::LogIntensity,
        data,
    })
}
