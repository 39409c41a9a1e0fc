//! Binary 8-bit PGM (P5) images.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimension(format!("{} bytes for a {width}x{height} image", data.len())));
        }
        Ok(GrayImage { width, height, data })
    }

    /// Linear map of `values` onto 0..=255 using `[lo, hi]`.
    pub fn from_values(width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<Self> {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let data = values
            .iter()
            .map(|v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::new(width, height, data)
    }
}

pub fn write_pgm<W: Write>(mut w: W, img: &GrayImage) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    Ok(())
}

pub fn write_pgm_file(path: &Path, img: &GrayImage) -> Result<()> {
    let mut buf = Vec::with_capacity(img.data.len() + 32);
    write_pgm(&mut buf, img)?;
    super::write_atomic(path, &buf)
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    read_pgm(&std::fs::read(path)?)
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("unsupported PGM magic '{}'", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field '{s}'")));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported, maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    GrayImage::new(width, height, bytes[pos..pos + n].to_vec())
}
