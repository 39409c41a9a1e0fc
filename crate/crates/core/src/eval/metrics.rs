//! Task metrics.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::CumulativeBSpline;

/// Sensor height the flow error is normalized to.
pub const RNEPE_REFERENCE_HEIGHT: f64 = 1280.0;

/// Peak signal-to-noise ratio in dB; `+inf` for identical frames.
pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    a.same_shape(b)?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Resolution-normalized end-point error `(1280 / H) * |v_hat - v_gt|`.
pub fn rnepe(v_hat: [f64; 2], v_gt: [f64; 2], height: f64) -> f64 {
    RNEPE_REFERENCE_HEIGHT / height * (v_hat[0] - v_gt[0]).hypot(v_hat[1] - v_gt[1])
}

/// Mean distance in millimeters between the translation components of two
/// splines, sampled at interval midpoints at `sample_rate` Hz over the
/// common domain.
pub fn position_error(est: &CumulativeBSpline, gt: &CumulativeBSpline, sample_rate: f64) -> Result<f64> {
    if !(sample_rate > 0.0) {
        return Err(Error::Config(format!("invalid sample rate {sample_rate}")));
    }
    let (a0, b0) = est.domain();
    let (a1, b1) = gt.domain();
    let (a, b) = (a0.max(a1), b0.min(b1));
    if !(b > a) {
        return Err(Error::Domain(format!(
            "spline domains [{a0}, {b0}) and [{a1}, {b1}) do not overlap"
        )));
    }
    let n = (((b - a) * sample_rate).round() as usize).max(1);
    let h = (b - a) / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let t = a + (i as f64 + 0.5) * h;
        sum += (est.sample(t)?.translation - gt.sample(t)?.translation).norm();
    }
    Ok(sum / n as f64 * 1e3)
}
