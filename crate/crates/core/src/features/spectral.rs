//! Lomb-Scargle spectral estimation on unevenly sampled tachograms.
//!
//! Beat times are the cumulative sums of the RR intervals, so no resampling
//! or interpolation is involved. The periodogram is scaled to a one-sided
//! power spectral density (ms²/Hz) using the mean sampling rate, which makes
//! its integral over all frequencies approximate the series variance.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Frequency grid spacing in Hz.
pub const GRID_STEP_HZ: f64 = 0.005;

/// Half-open frequency band `(lo, hi]` in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const VLF: Band = Band { lo: 0.003, hi: 0.04 };
    pub const LF: Band = Band { lo: 0.04, hi: 0.15 };
    pub const HF: Band = Band { lo: 0.15, hi: 0.4 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let band = Band { lo, hi };
        band.validate()?;
        Ok(band)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.lo < self.hi) {
            return Err(Error::Band {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }

    /// Grid frequencies `k * step` that fall inside the band.
    ///
    /// The grid is anchored at zero for every band, so a sub-band always
    /// integrates over a subset of its super-band's grid points.
    pub fn grid(&self, step: f64) -> Vec<f64> {
        let tol = 1e-9;
        let first = (self.lo / step + tol).floor() as usize + 1;
        let last = (self.hi / step + tol).floor() as usize;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

/// Beat times in seconds, one per interval, measured at the end of each interval.
pub fn beat_times_s(intervals_ms: &[f64]) -> Vec<f64> {
    intervals_ms
        .iter()
        .scan(0.0, |t, &rr| {
            *t += rr / 1000.0;
            Some(*t)
        })
        .collect()
}

/// Classical Lomb-Scargle periodogram of `values` sampled at `times`,
/// evaluated at each frequency in `freqs` (Hz). `values` must already be
/// mean-subtracted.
pub fn lomb_scargle(times: &[f64], values: &[f64], freqs: &[f64]) -> Vec<f64> {
    debug_assert_eq!(times.len(), values.len());
    let n = times.len() as f64;
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let (s2, c2) = times.iter().fold((0.0, 0.0), |(s, c), &t| {
                let (sin, cos) = (2.0 * w * t).sin_cos();
                (s + sin, c + cos)
            });
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (&t, &y) in times.iter().zip(values) {
                let (sin, cos) = (w * (t - tau)).sin_cos();
                yc += y * cos;
                ys += y * sin;
                cc += cos * cos;
                ss += sin * sin;
            }
            let floor = 1e-12 * n;
            let mut p = 0.0;
            if cc > floor {
                p += yc * yc / cc;
            }
            if ss > floor {
                p += ys * ys / ss;
            }
            0.5 * p
        })
        .collect()
}

/// One-sided PSD in ms²/Hz of an RR series at the given frequencies.
pub fn psd(intervals_ms: &[f64], freqs: &[f64]) -> Vec<f64> {
    let n = intervals_ms.len() as f64;
    let mean = intervals_ms.iter().sum::<f64>() / n;
    let times = beat_times_s(intervals_ms);
    let centered: Vec<f64> = intervals_ms.iter().map(|rr| rr - mean).collect();
    let mean_period_s = mean / 1000.0;
    lomb_scargle(&times, &centered, freqs)
        .into_iter()
        .map(|p| 2.0 * p * mean_period_s)
        .collect()
}

/// Trapezoidal integral of the Lomb-Scargle PSD over `band`, in ms².
pub fn band_power(intervals_ms: &[f64], band: Band) -> Result<f64> {
    band_power_with_step(intervals_ms, band, GRID_STEP_HZ)
}

pub fn band_power_with_step(intervals_ms: &[f64], band: Band, step: f64) -> Result<f64> {
    band.validate()?;
    let freqs = band.grid(step);
    if freqs.len() < 2 {
        return Err(Error::Band {
            lo: band.lo,
            hi: band.hi,
        });
    }
    if intervals_ms.len() < 2 {
        return Err(Error::TooShort {
            what: "spectral estimation",
            needed: 2,
            available: intervals_ms.len(),
        });
    }
    let (lo, hi) = intervals_ms
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(0.0);
    }
    let density = psd(intervals_ms, &freqs);
    let area = freqs
        .windows(2)
        .zip(density.windows(2))
        .map(|(f, p)| 0.5 * (p[0] + p[1]) * (f[1] - f[0]))
        .sum();
    Ok(area)
}
