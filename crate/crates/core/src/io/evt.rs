//! EVT1 binary event files.
//!
//! Little-endian layout: magic `EVT1`, `u16` width, `u16` height, `u64`
//! start and end times in nanoseconds, `u64` event count, then one 14-byte
//! record per event: `u64` t, `u16` x, `u16` y, `i8` polarity, `u8` padding.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::sensor::{Event, EventStream};

pub const MAGIC: [u8; 4] = *b"EVT1";
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 14;

pub fn write_evt<W: Write>(mut w: W, stream: &EventStream) -> Result<()> {
    if stream.width > u16::MAX as usize || stream.height > u16::MAX as usize {
        return Err(Error::Format(format!("{}x{} does not fit EVT1", stream.width, stream.height)));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    buf.extend_from_slice(&MAGIC);
    buf.write_u16::<LittleEndian>(stream.width as u16)?;
    buf.write_u16::<LittleEndian>(stream.height as u16)?;
    buf.write_u64::<LittleEndian>(stream.t_start)?;
    buf.write_u64::<LittleEndian>(stream.t_end)?;
    buf.write_u64::<LittleEndian>(stream.events.len() as u64)?;
    for e in &stream.events {
        buf.write_u64::<LittleEndian>(e.t)?;
        buf.write_u16::<LittleEndian>(e.x)?;
        buf.write_u16::<LittleEndian>(e.y)?;
        buf.write_i8(e.polarity)?;
        buf.write_u8(0)?;
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_evt<R: Read>(mut r: R) -> Result<EventStream> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_evt(&bytes)
}

fn parse_evt(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("EVT1 file too short ({} bytes)", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad EVT1 magic".into()));
    }
    let mut h = &bytes[4..HEADER_LEN];
    let width = h.read_u16::<LittleEndian>()? as usize;
    let height = h.read_u16::<LittleEndian>()? as usize;
    let t_start = h.read_u64::<LittleEndian>()?;
    let t_end = h.read_u64::<LittleEndian>()?;
    let count = h.read_u64::<LittleEndian>()?;
    let expected = (count as u128) * RECORD_LEN as u128 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::Format(format!(
            "EVT1 header announces {count} events but the file has {} bytes",
            bytes.len()
        )));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut body = &bytes[HEADER_LEN..];
    for _ in 0..count {
        let t = body.read_u64::<LittleEndian>()?;
        let x = body.read_u16::<LittleEndian>()?;
        let y = body.read_u16::<LittleEndian>()?;
        let polarity = body.read_i8()?;
        let _pad = body.read_u8()?;
        events.push(Event { t, x, y, polarity });
    }
    EventStream::new(events, width, height, t_start, t_end).map_err(|e| match e {
        Error::TimeOrder(m) | Error::Format(m) => Error::Format(m),
        other => other,
    })
}

pub fn write_evt_file(path: &Path, stream: &EventStream) -> Result<()> {
    let mut buf = Vec::new();
    write_evt(&mut buf, stream)?;
    super::write_atomic(path, &buf)
}

pub fn read_evt_file(path: &Path) -> Result<EventStream> {
    parse_evt(&std::fs::read(path)?)
}

/// CSV export with header `t_ns,x,y,p`.
pub fn write_events_csv<W: Write>(mut w: W, stream: &EventStream) -> Result<()> {
    let mut out = String::with_capacity(16 + 24 * stream.events.len());
    out.push_str("t_ns,x,y,p\n");
    for e in &stream.events {
        out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.polarity));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
