//! Dense timestamped rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Irradiance floor; log intensities stay finite above it.
pub const IRRADIANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Irradiance,
    LogIntensity,
    /// Temporal derivative of log intensity, 1/s.
    LogDerivative,
}

/// Row-major `height x width` raster. Pixel `(x, y)` has its center at
/// integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub timestamp: f64,
    pub kind: FrameKind,
    pub data: Vec<f64>,
}

/// Result of a bilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    /// Gradient of the bilinear interpolant (zero along clamped axes).
    pub grad: [f64; 2],
    /// The lookup fell outside the raster and was clamped.
    pub clamped: bool,
}

impl Frame {
    pub fn new(width: usize, height: usize, timestamp: f64, kind: FrameKind, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} frame",
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            timestamp,
            kind,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, timestamp: f64, kind: FrameKind, value: f64) -> Self {
        Frame {
            width,
            height,
            timestamp,
            kind,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        timestamp: f64,
        kind: FrameKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            timestamp,
            kind,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn same_shape(&self, other: &Frame) -> Result<()> {
        if self.resolution() == other.resolution() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn map(&self, kind: FrameKind, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            timestamp: self.timestamp,
            kind,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear interpolation with clamp-to-edge.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> Sample {
        let wmax = (self.width - 1) as f64;
        let hmax = (self.height - 1) as f64;
        let cx = x.clamp(0.0, wmax);
        let cy = y.clamp(0.0, hmax);
        let clamped_x = cx != x;
        let clamped_y = cy != y;
        let x0 = (cx.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (cy.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = cx - x0 as f64;
        let ay = cy - y0 as f64;
        let w = self.width;
        let i00 = self.data[y0 * w + x0];
        let i10 = self.data[y0 * w + x1];
        let i01 = self.data[y1 * w + x0];
        let i11 = self.data[y1 * w + x1];
        let top = i00 + ax * (i10 - i00);
        let bot = i01 + ax * (i11 - i01);
        let value = top + ay * (bot - top);
        let gx = if clamped_x {
            0.0
        } else {
            (1.0 - ay) * (i10 - i00) + ay * (i11 - i01)
        };
        let gy = if clamped_y { 0.0 } else { bot - top };
        Sample {
            value,
            grad: [gx, gy],
            clamped: clamped_x || clamped_y,
        }
    }

    /// Central-difference gradient magnitude at an interior pixel.
    pub fn gradient_magnitude(&self, x: usize, y: usize) -> f64 {
        let xm = x.saturating_sub(1);
        let xp = (x + 1).min(self.width - 1);
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(self.height - 1);
        let gx = (self.get(xp, y) - self.get(xm, y)) / (xp - xm).max(1) as f64;
        let gy = (self.get(x, yp) - self.get(x, ym)) / (yp - ym).max(1) as f64;
        gx.hypot(gy)
    }

    /// Separable Gaussian blur with clamp-to-edge borders.
    pub fn gaussian_blur(&self, sigma: f64) -> Frame {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let xi = (x + k as isize - r).clamp(0, w - 1);
                    acc += kv * self.data[(y * w + xi) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let yi = (y + k as isize - r).clamp(0, h - 1);
                    acc += kv * tmp[(yi * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Frame {
            data: out,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            timestamp: self.timestamp,
            kind: self.kind,
            data: Vec::new(),
        }
    }
}
