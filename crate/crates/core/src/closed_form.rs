//! Closed forms for a standard Brownian motion between constant boundaries.
//!
//! All times here are elapsed times `t − t0`.

use std::f64::consts::PI;

use crate::error::{FptError, Result};
use crate::normal;

/// Below this elapsed time the densities are returned as exactly zero.
pub const SMALL_TIME: f64 = 1e-12;

/// Truncation controls for the image series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// Largest `|k|` summed.
    pub max_terms: usize,
    /// A pair `(k, −k)` whose terms are both below this stops the sum.
    pub tail_tolerance: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { max_terms: 1000, tail_tolerance: 1e-16 }
    }
}

impl SeriesControl {
    pub fn new(max_terms: usize, tail_tolerance: f64) -> Result<Self> {
        if max_terms < 1 || !(tail_tolerance >= 0.0) {
            return Err(FptError::InvalidParameter(format!(
                "series control needs max_terms >= 1 and tail_tolerance >= 0, got {max_terms}, {tail_tolerance}"
            )));
        }
        Ok(Self { max_terms, tail_tolerance })
    }

    /// Sum exactly `2·max_terms + 1` terms.
    pub fn fixed(max_terms: usize) -> Self {
        Self { max_terms, tail_tolerance: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// The truncated sum was negative beyond rounding noise and was set to zero.
    pub clamped: bool,
    pub terms_used: usize,
}

fn check_time(elapsed: f64) -> Result<()> {
    if elapsed > 0.0 && elapsed.is_finite() {
        Ok(())
    } else {
        Err(FptError::Domain(format!("elapsed time must be > 0, got {elapsed}")))
    }
}

fn check_strip(x0: f64, a: f64, b: f64) -> Result<()> {
    if a < x0 && x0 < b {
        Ok(())
    } else {
        Err(FptError::Domain(format!("need a < x0 < b, got a={a}, x0={x0}, b={b}")))
    }
}

/// `Σ_k (d + 2kL)/√(2πt³) · exp(−(d + 2kL)²/(2t))`, `d` the distance to the
/// boundary of interest and `L` the strip width.
fn image_series(elapsed: f64, distance: f64, width: f64, ctl: &SeriesControl) -> SeriesValue {
    if elapsed < SMALL_TIME {
        return SeriesValue { value: 0.0, clamped: false, terms_used: 0 };
    }
    let scale = 1.0 / (2.0 * PI * elapsed.powi(3)).sqrt();
    let term = |u: f64| u * scale * (-u * u / (2.0 * elapsed)).exp();
    let envelope_peak = elapsed.sqrt();

    let mut sum = term(distance);
    let mut magnitude = sum.abs();
    let mut used = 1;
    for k in 1..=ctl.max_terms {
        let shift = 2.0 * k as f64 * width;
        let (up, um) = (distance + shift, distance - shift);
        let (tp, tm) = (term(up), term(um));
        sum += tp + tm;
        magnitude += tp.abs() + tm.abs();
        used += 2;
        // terms only decay monotonically past the envelope maximum at |u| = √t
        if tp.abs() < ctl.tail_tolerance
            && tm.abs() < ctl.tail_tolerance
            && up.abs().min(um.abs()) > envelope_peak
        {
            break;
        }
    }
    let noise = 64.0 * f64::EPSILON * magnitude;
    SeriesValue { value: sum.max(0.0), clamped: sum < -noise, terms_used: used }
}

/// Density of hitting the lower boundary `a` before the upper boundary `b`.
pub fn bm_sub_density_lower(elapsed: f64, x0: f64, a: f64, b: f64, ctl: &SeriesControl) -> Result<SeriesValue> {
    check_time(elapsed)?;
    check_strip(x0, a, b)?;
    Ok(image_series(elapsed, x0 - a, b - a, ctl))
}

/// Density of hitting the upper boundary `b` before the lower boundary `a`.
pub fn bm_sub_density_upper(elapsed: f64, x0: f64, a: f64, b: f64, ctl: &SeriesControl) -> Result<SeriesValue> {
    check_time(elapsed)?;
    check_strip(x0, a, b)?;
    Ok(image_series(elapsed, b - x0, b - a, ctl))
}

/// First-passage density through the level `a`.
pub fn bm_fpt_pdf(elapsed: f64, x0: f64, a: f64) -> Result<f64> {
    check_time(elapsed)?;
    if a == x0 {
        return Err(FptError::Domain("level coincides with the start".into()));
    }
    if elapsed < SMALL_TIME {
        return Ok(0.0);
    }
    let d = (a - x0).abs();
    Ok(d / (2.0 * PI * elapsed.powi(3)).sqrt() * (-d * d / (2.0 * elapsed)).exp())
}

/// First-passage CDF through the level `a`, `erfc(|a − x0| / √(2t))`.
pub fn bm_fpt_cdf(elapsed: f64, x0: f64, a: f64) -> Result<f64> {
    check_time(elapsed)?;
    Ok(normal::erfc((a - x0).abs() / (2.0 * elapsed).sqrt()))
}
