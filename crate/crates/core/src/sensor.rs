//! Contrast-threshold event generation.
//!
//! Each pixel tracks a voltage: the log intensity itself for an ideal
//! pixel, or the output of two cascaded first-order low-pass stages with
//! cutoff `f_cutoff` otherwise. Whenever the voltage moves more than `C`
//! away from the pixel's reference level an event is emitted at the
//! linearly interpolated crossing time and the reference moves by exactly
//! `±C`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind};
use crate::par;

pub const DEFAULT_CONTRAST_THRESHOLD: f64 = 0.2;

/// Pixel cutoff frequency in Hz; infinite for an ideal pixel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Cutoff(pub f64);

impl Cutoff {
    pub const IDEAL: Cutoff = Cutoff(f64::INFINITY);

    pub fn hz(f: f64) -> Result<Self> {
        if f > 0.0 {
            Ok(Cutoff(f))
        } else {
            Err(Error::Config(format!("cutoff frequency must be positive, got {f}")))
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.0.is_infinite()
    }

    /// Angular cutoff `2 pi f`.
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.0
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ideal() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "ideal" => Ok(Cutoff::IDEAL),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid cutoff frequency '{s}'")))
                .and_then(Cutoff::hz),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_ideal() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(f) => Cutoff::hz(f).map_err(serde::de::Error::custom),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub contrast_threshold: f64,
    pub cutoff: Cutoff,
    pub width: usize,
    pub height: usize,
}

impl SensorConfig {
    pub fn new(width: usize, height: usize, contrast_threshold: f64, cutoff: Cutoff) -> Result<Self> {
        let c = SensorConfig {
            contrast_threshold,
            cutoff,
            width,
            height,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn ideal(width: usize, height: usize) -> Self {
        SensorConfig {
            contrast_threshold: DEFAULT_CONTRAST_THRESHOLD,
            cutoff: Cutoff::IDEAL,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0) {
            return Err(Error::Config(format!(
                "contrast threshold must be positive, got {}",
                self.contrast_threshold
            )));
        }
        if !(self.cutoff.0 > 0.0) {
            return Err(Error::Config("cutoff frequency must be positive".into()));
        }
        if self.width == 0 || self.height == 0 || self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return Err(Error::Config(format!("invalid resolution {}x{}", self.width, self.height)));
        }
        Ok(())
    }
}

/// One sensor event. `t` is in nanoseconds on the frame clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: i8,
}

/// Time-sorted events from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: usize,
    pub height: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub config: Option<SensorConfig>,
}

impl EventStream {
    pub fn new(events: Vec<Event>, width: usize, height: usize, t_start: u64, t_end: u64) -> Result<Self> {
        let s = EventStream {
            events,
            width,
            height,
            t_start,
            t_end,
            config: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_config(mut self, config: SensorConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_end < self.t_start {
            return Err(Error::TimeOrder(format!("t_end {} < t_start {}", self.t_end, self.t_start)));
        }
        let mut prev = self.t_start;
        for (i, e) in self.events.iter().enumerate() {
            if e.t < prev || e.t > self.t_end {
                return Err(Error::TimeOrder(format!("event {i} at {} ns out of order or range", e.t)));
            }
            if e.x as usize >= self.width || e.y as usize >= self.height {
                return Err(Error::Format(format!("event {i} at ({}, {}) outside sensor", e.x, e.y)));
            }
            if e.polarity != 1 && e.polarity != -1 {
                return Err(Error::Format(format!("event {i} has polarity {}", e.polarity)));
            }
            prev = e.t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        (self.t_end - self.t_start) as f64 * 1e-9
    }
}

/// Internal state of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelState {
    /// First low-pass stage.
    pub v1: f64,
    /// Second stage; this is the voltage compared against the reference.
    pub v2: f64,
    /// Input log intensity at the last update.
    pub input: f64,
    /// Reference level at initialization.
    pub initial_reference: f64,
    /// Sum of emitted polarities; reference = initial + C * count.
    pub count: i32,
    /// Nanosecond timestamp of the last event, `u64::MAX` if none.
    pub last_event_t: u64,
}

impl PixelState {
    pub fn new(log_intensity: f64) -> Self {
        PixelState {
            v1: log_intensity,
            v2: log_intensity,
            input: log_intensity,
            initial_reference: log_intensity,
            count: 0,
            last_event_t: u64::MAX,
        }
    }

    #[inline]
    pub fn reference(&self, c: f64) -> f64 {
        self.initial_reference + c * self.count as f64
    }
}

/// Advances the pixel voltage by `dt` seconds towards `input`.
///
/// The input is taken to vary linearly from the previous input to `input`
/// over the step; both cascaded stages `v' = a (in - v)` are then
/// integrated exactly (`a = 2 pi f_cutoff`). An ideal cutoff makes the
/// voltage equal the input.
#[inline]
pub fn lowpass_step(state: &PixelState, input: f64, dt: f64, cutoff: Cutoff) -> PixelState {
    let mut s = *state;
    if cutoff.is_ideal() {
        s.v1 = input;
        s.v2 = input;
        s.input = input;
        return s;
    }
    let a = cutoff.omega();
    let decay = (-a * dt).exp();
    let slope = (input - s.input) / dt;
    let lag = slope / a;
    // Deviations from the steady ramp-tracking solution decay as
    // e1(t) = e1 e^{-at}, e2(t) = (e2 + a t e1) e^{-at}.
    let e1 = s.v1 - (s.input - lag);
    let e2 = s.v2 - (s.input - 2.0 * lag);
    s.v1 = input - lag + e1 * decay;
    s.v2 = input - 2.0 * lag + (e2 + a * dt * e1) * decay;
    s.input = input;
    s
}

#[inline]
fn seconds_to_ns(t: f64) -> u64 {
    (t * 1e9).round().max(0.0) as u64
}

/// Streaming event generator fed one log-intensity frame at a time.
#[derive(Debug, Clone)]
pub struct EventSimulator {
    config: SensorConfig,
    states: Vec<PixelState>,
    t_first: f64,
    t_prev: f64,
    record_from: u64,
    events: Vec<Event>,
}

impl EventSimulator {
    pub fn new(config: SensorConfig, first: &Frame) -> Result<Self> {
        config.validate()?;
        check_frame(&config, first)?;
        if !(first.timestamp >= 0.0) {
            return Err(Error::TimeOrder(format!("negative frame time {}", first.timestamp)));
        }
        Ok(EventSimulator {
            config,
            states: first.data.iter().map(|&l| PixelState::new(l)).collect(),
            t_first: first.timestamp,
            t_prev: first.timestamp,
            record_from: 0,
            events: Vec::new(),
        })
    }

    /// Drop events before `t` seconds (the pixels still evolve).
    pub fn record_from(mut self, t: f64) -> Self {
        self.record_from = seconds_to_ns(t);
        self
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn states(&self) -> &[PixelState] {
        &self.states
    }

    pub fn time(&self) -> f64 {
        self.t_prev
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn advance(&mut self, frame: &Frame) -> Result<()> {
        check_frame(&self.config, frame)?;
        let dt = frame.timestamp - self.t_prev;
        if !(dt > 0.0) {
            return Err(Error::TimeOrder(format!(
                "frame at {} s does not follow {} s",
                frame.timestamp, self.t_prev
            )));
        }
        let t_a = self.t_prev;
        let width = self.config.width;
        let c = self.config.contrast_threshold;
        let cutoff = self.config.cutoff;
        let record_from = self.record_from;
        let rows = par::map_rows(&mut self.states, width, |y, row| {
            let input = &frame.data[y * width..(y + 1) * width];
            let mut out = Vec::new();
            for (x, (st, &l)) in row.iter_mut().zip(input).enumerate() {
                let va = st.v2;
                *st = lowpass_step(st, l, dt, cutoff);
                let vb = st.v2;
                if vb == va {
                    continue;
                }
                let (polarity, step) = if vb > va { (1i8, 1i32) } else { (-1i8, -1i32) };
                loop {
                    let level = st.initial_reference + c * (st.count + step) as f64;
                    let crossed = if step > 0 { vb > level } else { vb < level };
                    if !crossed {
                        break;
                    }
                    let tau = ((level - va) / (vb - va)).clamp(0.0, 1.0);
                    let t = seconds_to_ns(t_a + tau * dt);
                    st.count += step;
                    st.last_event_t = t;
                    if t >= record_from {
                        out.push(Event {
                            t,
                            x: x as u16,
                            y: y as u16,
                            polarity,
                        });
                    }
                }
            }
            out
        });
        let start = self.events.len();
        for r in rows {
            self.events.extend(r);
        }
        self.events[start..].sort_by_key(|e| (e.t, e.y, e.x));
        self.t_prev = frame.timestamp;
        Ok(())
    }

    pub fn finish(self) -> EventStream {
        let t_start = seconds_to_ns(self.t_first).max(self.record_from);
        let t_end = seconds_to_ns(self.t_prev).max(t_start);
        EventStream {
            events: self.events,
            width: self.config.width,
            height: self.config.height,
            t_start,
            t_end,
            config: Some(self.config),
        }
    }
}

fn check_frame(config: &SensorConfig, frame: &Frame) -> Result<()> {
    if frame.resolution() != (config.width, config.height) {
        return Err(Error::Config(format!(
            "frame is {}x{} but the sensor is {}x{}",
            frame.width, frame.height, config.width, config.height
        )));
    }
    if frame.kind != FrameKind::LogIntensity {
        return Err(Error::Config("event generation needs log-intensity frames".into()));
    }
    Ok(())
}

/// Events from a uniformly sampled log-intensity sequence.
pub fn generate_events(frames: &[Frame], config: &SensorConfig) -> Result<EventStream> {
    if frames.len() < 2 {
        return Err(Error::InsufficientData("event generation needs at least two frames".into()));
    }
    let dt = frames[1].timestamp - frames[0].timestamp;
    if frames.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
        return Err(Error::TimeOrder("frame timestamps must increase".into()));
    }
    for w in frames.windows(2) {
        let step = w[1].timestamp - w[0].timestamp;
        if (step - dt).abs() > 1e-6 * dt {
            return Err(Error::Config(format!("non-uniform frame step {step} vs {dt}")));
        }
    }
    let mut sim = EventSimulator::new(*config, &frames[0])?;
    for f in &frames[1..] {
        sim.advance(f)?;
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRate {
    /// Mev/s over the whole sensor.
    pub total: f64,
    /// ev/s per pixel.
    pub per_pixel: f64,
    pub count: usize,
}

pub fn event_rate(stream: &EventStream) -> Result<EventRate> {
    if stream.t_end <= stream.t_start {
        return Err(Error::ZeroDuration);
    }
    let d = stream.duration_s();
    let n = stream.events.len() as f64;
    Ok(EventRate {
        total: n / d / 1e6,
        per_pixel: n / d / (stream.width * stream.height) as f64,
        count: stream.events.len(),
    })
}

/// Events with `t0 <= t < t1` (nanoseconds).
pub fn slice_window(stream: &EventStream, t0: u64, t1: u64) -> EventStream {
    let a = stream.events.partition_point(|e| e.t < t0);
    let b = stream.events.partition_point(|e| e.t < t1);
    let (a, b) = (a, b.max(a));
    EventStream {
        events: stream.events[a..b].to_vec(),
        width: stream.width,
        height: stream.height,
        t_start: t0,
        t_end: t1.max(t0),
        config: stream.config,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp_frames(slope: f64, rate: f64, duration: f64) -> Vec<Frame> {
        let n = (duration * rate).round() as usize;
        (0..=n)
            .map(|k| {
                let t = k as f64 / rate;
                Frame::constant(1, 1, t, FrameKind::LogIntensity, slope * t)
            })
            .collect()
    }

    #[test]
    fn ideal_ramp_crossings() {
        let rate = 5000.0;
        let s = generate_events(&ramp_frames(0.5, rate, 1.0), &SensorConfig::ideal(1, 1)).unwrap();
        assert_eq!(s.events.len(), 2);
        for (e, t) in s.events.iter().zip([0.4, 0.8]) {
            assert_eq!(e.polarity, 1);
            assert!((e.t as f64 * 1e-9 - t).abs() <= 0.5 / rate);
        }
        let s = generate_events(&ramp_frames(-0.5, rate, 1.0), &SensorConfig::ideal(1, 1)).unwrap();
        assert_eq!(s.events.len(), 2);
        assert!(s.events.iter().all(|e| e.polarity == -1));
        for (e, t) in s.events.iter().zip([0.4, 0.8]) {
            assert!((e.t as f64 * 1e-9 - t).abs() <= 0.5 / rate);
        }
    }

    #[test]
    fn filtered_ramp_matches_dense_simulation() {
        let rate = 5000.0;
        let cfg = SensorConfig::new(1, 1, 0.2, Cutoff(50.0)).unwrap();
        let coarse = generate_events(&ramp_frames(0.5, rate, 1.0), &cfg).unwrap();
        let dense = generate_events(&ramp_frames(0.5, rate * 100.0, 1.0), &cfg).unwrap();
        let ideal = generate_events(&ramp_frames(0.5, rate, 1.0), &SensorConfig::ideal(1, 1)).unwrap();
        assert_eq!(coarse.events.len(), dense.events.len());
        assert_eq!(coarse.events.len(), ideal.events.len());
        for ((c, d), i) in coarse.events.iter().zip(&dense.events).zip(&ideal.events) {
            assert!(c.t > i.t, "filtered events must lag the ideal ones");
            assert!((c.t as f64 - d.t as f64).abs() * 1e-9 <= 2.0 / rate);
        }
    }

    #[test]
    fn ideal_filter_is_identity() {
        let s = PixelState::new(0.3);
        let n = lowpass_step(&s, 1.7, 1e-4, Cutoff::IDEAL);
        assert_eq!(n.v2, 1.7);
        assert_eq!(n.v1, 1.7);
    }

    #[test]
    fn filter_has_unit_dc_gain() {
        let f = 200.0;
        let cutoff = Cutoff(f);
        let mut s = PixelState::new(0.0);
        let dt = 1e-4;
        let steps = (10.0 / (2.0 * std::f64::consts::PI * f) / dt).ceil() as usize * 3;
        for _ in 0..steps {
            s = lowpass_step(&s, 1.0, dt, cutoff);
        }
        assert!((s.v2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_response_is_exact_cascade() {
        let cutoff = Cutoff(50.0);
        let a = cutoff.omega();
        // Input already at 1 at t = 0, states still at 0: a unit step.
        let mut s = PixelState::new(0.0);
        s.input = 1.0;
        let dt = 2e-4;
        let mut t = 0.0;
        for k in 1..=100 {
            s = lowpass_step(&s, 1.0, dt, cutoff);
            t = k as f64 * dt;
            let exact = 1.0 - (-a * t).exp() * (1.0 + a * t);
            assert!((s.v2 - exact).abs() < 1e-12);
        }
        assert!((t - 0.02).abs() < 1e-12);
    }

    #[test]
    fn reference_tracking_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let mut level: f64 = 0.0;
        let frames: Vec<Frame> = (0..n)
            .map(|k| {
                level += rng.gen_range(-0.3..0.3);
                Frame::constant(2, 1, k as f64 * 1e-3, FrameKind::LogIntensity, level)
            })
            .collect();
        for cutoff in [Cutoff::IDEAL, Cutoff(200.0), Cutoff(50.0)] {
            let cfg = SensorConfig::new(2, 1, 0.2, cutoff).unwrap();
            let mut sim = EventSimulator::new(cfg, &frames[0]).unwrap();
            for f in &frames[1..] {
                sim.advance(f).unwrap();
                for st in sim.states() {
                    assert!((st.v2 - st.reference(0.2)).abs() <= 0.2 + 1e-12);
                }
            }
            let st = sim.states()[0];
            let s = sim.finish();
            let sum: i32 = s.events.iter().filter(|e| e.x == 0).map(|e| e.polarity as i32).sum();
            assert_eq!(sum, st.count);
            assert_eq!(st.reference(0.2), frames[0].data[0] + 0.2 * sum as f64);
        }
    }

    #[test]
    fn output_sorted_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let frames: Vec<Frame> = (0..30)
            .map(|k| Frame::from_fn(16, 8, k as f64 * 2e-4, FrameKind::LogIntensity, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let cfg = SensorConfig::new(16, 8, 0.2, Cutoff(200.0)).unwrap();
        let a = generate_events(&frames, &cfg).unwrap();
        let b = crate::par::sequential(|| generate_events(&frames, &cfg).unwrap());
        assert!(a.events.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn generate_events_errors() {
        let f = ramp_frames(0.5, 100.0, 0.1);
        assert!(matches!(generate_events(&f, &SensorConfig::ideal(2, 2)), Err(Error::Config(_))));
        assert!(generate_events(&f[..1], &SensorConfig::ideal(1, 1)).is_err());
        let mut rev = f.clone();
        rev.swap(2, 3);
        assert!(matches!(generate_events(&rev, &SensorConfig::ideal(1, 1)), Err(Error::TimeOrder(_))));
    }

    #[test]
    fn event_rate_examples() {
        let events = vec![Event { t: 0, x: 0, y: 0, polarity: 1 }; 1_000_000];
        let s = EventStream::new(events, 10, 10, 0, 500_000_000).unwrap();
        let r = event_rate(&s).unwrap();
        assert!((r.total - 2.0).abs() < 1e-12);
        assert!((r.per_pixel - 2e4).abs() < 1e-6);
        let e = EventStream::new(vec![], 4, 4, 0, 1_000).unwrap();
        let r = event_rate(&e).unwrap();
        assert_eq!((r.total, r.per_pixel, r.count), (0.0, 0.0, 0));
        let z = EventStream::new(vec![], 4, 4, 5, 5).unwrap();
        assert!(matches!(event_rate(&z), Err(Error::ZeroDuration)));
    }

    #[test]
    fn slicing_partitions_the_stream() {
        let events: Vec<Event> = (0..100u64).map(|i| Event { t: i * 10, x: (i % 4) as u16, y: 0, polarity: 1 }).collect();
        let s = EventStream::new(events, 4, 1, 0, 1000).unwrap();
        assert_eq!(slice_window(&s, 0, 1001).events, s.events);
        assert!(slice_window(&s, 2000, 3000).events.is_empty());
        let a = slice_window(&s, 0, 333);
        let b = slice_window(&s, 333, 1001);
        let joined: Vec<Event> = a.events.iter().chain(&b.events).copied().collect();
        assert_eq!(joined, s.events);
        assert_eq!((a.t_start, a.t_end), (0, 333));
    }

    #[test]
    fn cutoff_parsing() {
        assert!("inf".parse::<Cutoff>().unwrap().is_ideal());
        assert_eq!("50".parse::<Cutoff>().unwrap(), Cutoff(50.0));
        assert!("-3".parse::<Cutoff>().is_err());
        let j = serde_json::to_string(&vec![Cutoff::IDEAL, Cutoff(200.0)]).unwrap();
        assert_eq!(j, r#"["inf",200.0]"#);
        let back: Vec<Cutoff> = serde_json::from_str(&j).unwrap();
        assert_eq!(back, vec![Cutoff::IDEAL, Cutoff(200.0)]);
    }
}
