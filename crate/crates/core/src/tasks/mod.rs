//! Downstream estimators driven by event streams: event integration
//! (reconstruction), photometric flow and photometric pose tracking.

pub mod ei;
pub mod epf;
pub mod eppt;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::sensor::Event;

/// An event together with the time since the previous event at its pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedEvent {
    pub x: u16,
    pub y: u16,
    pub polarity: f64,
    /// Seconds since the reference time.
    pub t: f64,
    /// Seconds since the previous event at the same pixel.
    pub dt: f64,
}

/// Pairs each event with its same-pixel predecessor in `events`. The first
/// event seen at a pixel has no predecessor and is counted as dropped.
pub fn pair_events(events: &[Event], t_ref_ns: u64) -> (Vec<PairedEvent>, usize) {
    let mut last: HashMap<(u16, u16), u64> = HashMap::new();
    let mut pairs = Vec::with_capacity(events.len());
    let mut dropped = 0;
    for e in events {
        match last.insert((e.x, e.y), e.t) {
            Some(prev) => pairs.push(PairedEvent {
                x: e.x,
                y: e.y,
                polarity: e.polarity as f64,
                t: (e.t as f64 - t_ref_ns as f64) * 1e-9,
                dt: (e.t - prev) as f64 * 1e-9,
            }),
            None => dropped += 1,
        }
    }
    (pairs, dropped)
}

/// Every `ceil(n / max)`-th pair, so at most `max` remain.
pub fn subsample_pairs(pairs: Vec<PairedEvent>, max: usize) -> Vec<PairedEvent> {
    if max == 0 || pairs.len() <= max {
        return pairs;
    }
    let stride = pairs.len().div_ceil(max);
    pairs.into_iter().step_by(stride).collect()
}

/// Counts of events discarded by an estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    /// No same-pixel predecessor inside the window.
    pub unpaired: usize,
    /// Ray missed the plane or left the reference view.
    pub out_of_view: usize,
    /// Removed by subsampling.
    pub subsampled: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.unpaired + self.out_of_view + self.subsampled
    }
}
