//! Procedural 8-bit textures for the bundled scenes.
//!
//! All three are built from lattice value noise summed over octaves, so
//! they carry detail down to single texels with roughly natural-image
//! spectral falloff. Gray levels are stretched onto `[20, 255]`.

use crate::error::{Error, Result};
use crate::io::GrayImage;
use crate::par;

pub const MIN_GRAY: f64 = 20.0;
pub const MAX_GRAY: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Rocks,
    Carpet,
    Tiles,
}

impl TextureKind {
    pub fn name(&self) -> &'static str {
        match self {
            TextureKind::Rocks => "rocks",
            TextureKind::Carpet => "carpet",
            TextureKind::Tiles => "tiles",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rocks" => Ok(TextureKind::Rocks),
            "carpet" => Ok(TextureKind::Carpet),
            "tiles" => Ok(TextureKind::Tiles),
            other => Err(Error::Config(format!("unknown bundled texture '{other}'"))),
        }
    }
}

#[inline]
fn hash(x: i64, y: i64, salt: u64) -> f64 {
    let mut z = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Value noise in `[0, 1]` with lattice spacing one.
#[inline]
fn value_noise(x: f64, y: f64, salt: u64) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (ix, iy) = (xf as i64, yf as i64);
    let (u, v) = (smooth(x - xf), smooth(y - yf));
    let a = hash(ix, iy, salt);
    let b = hash(ix + 1, iy, salt);
    let c = hash(ix, iy + 1, salt);
    let d = hash(ix + 1, iy + 1, salt);
    let top = a + u * (b - a);
    let bot = c + u * (d - c);
    top + v * (bot - top)
}

/// Octave sum from lattice spacing `coarse` down to about one texel.
fn fbm(x: f64, y: f64, coarse: f64, gain: f64, salt: u64) -> f64 {
    let mut freq = 1.0 / coarse;
    let mut amp = 1.0;
    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut octave = 0u64;
    while freq <= 1.0 {
        sum += amp * (value_noise(x * freq, y * freq, salt + octave) - 0.5);
        norm += amp;
        amp *= gain;
        freq *= 2.0;
        octave += 1;
    }
    if norm > 0.0 {
        sum / norm
    } else {
        0.0
    }
}

fn rocks(x: f64, y: f64, seed: u64) -> f64 {
    // Domain-warped noise gives rounded blobs; a ridged layer adds cracks.
    let wx = x + 40.0 * fbm(x, y, 256.0, 0.5, seed + 100);
    let wy = y + 40.0 * fbm(x, y, 256.0, 0.5, seed + 200);
    let body = fbm(wx, wy, 128.0, 0.6, seed);
    let ridge = 1.0 - (2.0 * fbm(wx, wy, 64.0, 0.5, seed + 300)).abs();
    body - 0.35 * ridge.powi(8) + 0.25 * fbm(x, y, 8.0, 0.7, seed + 400)
}

fn carpet(x: f64, y: f64, seed: u64) -> f64 {
    // Fine fibrous weave over a soft low-frequency mottle.
    let weave = ((x * 0.9).sin() * (y * 0.9).sin()) * 0.15;
    let fibers = fbm(x * 0.5, y * 3.0, 16.0, 0.75, seed + 10);
    let mottle = fbm(x, y, 192.0, 0.55, seed + 20);
    weave + 0.8 * fibers + 0.6 * mottle + 0.3 * fbm(x, y, 4.0, 0.8, seed + 30)
}

fn tiles(x: f64, y: f64, seed: u64) -> f64 {
    const TILE: f64 = 96.0;
    const GROUT: f64 = 5.0;
    let (tx, ty) = ((x / TILE).floor(), (y / TILE).floor());
    let (lx, ly) = (x - tx * TILE, y - ty * TILE);
    let tone = hash(tx as i64, ty as i64, seed + 50) - 0.5;
    let edge = lx.min(TILE - lx).min(ly).min(TILE - ly);
    let grout = if edge < GROUT { -0.6 } else { 0.0 };
    let speckle = fbm(x, y, 32.0, 0.7, seed + 60);
    0.7 * tone + grout + 0.5 * speckle
}

/// Renders a `size x size` texture of the given kind.
pub fn generate(kind: TextureKind, size: usize, seed: u64) -> Result<GrayImage> {
    if size < 8 {
        return Err(Error::Config(format!("texture size {size} too small")));
    }
    let f: fn(f64, f64, u64) -> f64 = match kind {
        TextureKind::Rocks => rocks,
        TextureKind::Carpet => carpet,
        TextureKind::Tiles => tiles,
    };
    let mut raw = vec![0.0f64; size * size];
    par::for_each_row(&mut raw, size, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = f(x as f64, y as f64, seed);
        }
    });
    // Robust stretch: clip the outer 0.5% tails.
    let mut sorted: Vec<f64> = raw.iter().step_by(7).copied().collect();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[sorted.len() / 200];
    let hi = sorted[sorted.len() - 1 - sorted.len() / 200];
    let span = (hi - lo).max(1e-12);
    let data = raw
        .iter()
        .map(|v| {
            let n = ((v - lo) / span).clamp(0.0, 1.0);
            (MIN_GRAY + n * (MAX_GRAY - MIN_GRAY)).round() as u8
        })
        .collect();
    GrayImage::new(size, size, data)
}
