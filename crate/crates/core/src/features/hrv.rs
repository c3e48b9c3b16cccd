//! Time-domain, windowed and nonlinear HRV statistics.

use crate::error::{Error, Result};
use crate::features::spectral::{band_power, Band};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStats {
    pub mean_rr: f64,
    pub min_rr: f64,
    pub max_rr: f64,
}

/// Mean, minimum and maximum over exactly the last `recent_beats` intervals.
pub fn time_stats(intervals: &[f64], recent_beats: usize) -> Result<TimeStats> {
    let recent = last_n(intervals, recent_beats, "recent-beat statistics")?;
    let (min_rr, max_rr) = recent
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(TimeStats {
        mean_rr: mean(recent),
        min_rr,
        max_rr,
    })
}

pub(crate) fn last_n<'a>(intervals: &'a [f64], n: usize, what: &'static str) -> Result<&'a [f64]> {
    if n == 0 || intervals.len() < n {
        return Err(Error::TooShort {
            what,
            needed: n.max(1),
            available: intervals.len(),
        });
    }
    Ok(&intervals[intervals.len() - n..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedDiff {
    /// Recent-window mean RR minus older-window mean RR, ms.
    pub delta_mean_rr: f64,
    /// Recent-window ectopic count minus older-window ectopic count.
    pub delta_ectopic_count: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSummary {
    /// Mean over non-ectopic beats in the window.
    pub mean_rr: f64,
    pub ectopic_count: i64,
}

pub fn summarize_window(intervals: &[f64], mask: &[bool]) -> Result<WindowSummary> {
    let (sum, normal) = intervals
        .iter()
        .zip(mask)
        .filter(|(_, &e)| !e)
        .fold((0.0, 0usize), |(s, n), (&rr, _)| (s + rr, n + 1));
    if normal == 0 {
        return Err(Error::TooShort {
            what: "windowed mean (window is entirely ectopic)",
            needed: 1,
            available: 0,
        });
    }
    Ok(WindowSummary {
        mean_rr: sum / normal as f64,
        ectopic_count: mask.iter().filter(|&&e| e).count() as i64,
    })
}

/// Difference of two window summaries, `recent - older`.
pub fn window_difference(recent: WindowSummary, older: WindowSummary) -> WindowedDiff {
    WindowedDiff {
        delta_mean_rr: recent.mean_rr - older.mean_rr,
        delta_ectopic_count: recent.ectopic_count - older.ectopic_count,
    }
}

/// Change between two consecutive windows covering the last `window_beats`
/// raw beats: the most recent half against the half before it.
pub fn windowed_diff(intervals: &[f64], ectopic_mask: &[bool], window_beats: usize) -> Result<WindowedDiff> {
    if intervals.len() != ectopic_mask.len() {
        return Err(Error::Dimension {
            expected: intervals.len(),
            got: ectopic_mask.len(),
        });
    }
    if window_beats < 2 || !window_beats.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "window_beats must be even and at least 2, got {window_beats}"
        )));
    }
    if intervals.len() < window_beats {
        return Err(Error::TooShort {
            what: "windowed features",
            needed: window_beats,
            available: intervals.len(),
        });
    }
    let half = window_beats / 2;
    let n = intervals.len();
    let recent = summarize_window(&intervals[n - half..], &ectopic_mask[n - half..])?;
    let older = summarize_window(&intervals[n - 2 * half..n - half], &ectopic_mask[n - 2 * half..n - half])?;
    Ok(window_difference(recent, older))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sdnn(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn rmssd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let ss: f64 = xs.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Fraction of successive differences strictly greater than 50 ms.
pub fn pnn50(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let over = xs.windows(2).filter(|w| (w[1] - w[0]).abs() > 50.0).count();
    over as f64 / (xs.len() - 1) as f64
}

/// Poincaré descriptors `(SD1, SD2)`.
///
/// SD1 is the RMS distance of the points `(rr[i], rr[i+1])` from the
/// identity line; SD2 is the standard deviation of their projections onto it.
pub fn poincare(xs: &[f64]) -> (f64, f64) {
    if xs.len() < 2 {
        return (0.0, 0.0);
    }
    let n = (xs.len() - 1) as f64;
    let across: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]) / std::f64::consts::SQRT_2).collect();
    let along: Vec<f64> = xs.windows(2).map(|w| (w[1] + w[0]) / std::f64::consts::SQRT_2).collect();
    let sd1 = (across.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let m = mean(&along);
    let sd2 = (along.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
    (sd1, sd2)
}

/// Sample entropy with embedding dimension `m` and tolerance `r` (Chebyshev
/// distance, self-matches excluded).
///
/// When no template pairs match, the conventional upper bound
/// `ln((N - m)(N - m - 1))` is returned instead of infinity.
pub fn sample_entropy(xs: &[f64], m: usize, r: f64) -> Result<f64> {
    let n = xs.len();
    if n < m + 2 {
        return Err(Error::TooShort {
            what: "sample entropy",
            needed: m + 2,
            available: n,
        });
    }
    // Both template lengths use the same N - m starting points.
    let templates = n - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            let close_m = (0..m).all(|k| (xs[i + k] - xs[j + k]).abs() <= r);
            if close_m {
                b += 1;
                if (xs[i + m] - xs[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        let t = templates as f64;
        return Ok((t * (t - 1.0)).ln());
    }
    Ok(-(a as f64 / b as f64).ln())
}

pub const BASELINE11_NAMES: [&str; 11] = [
    "mean_nn",
    "sdnn",
    "rmssd",
    "pnn50",
    "vlf_power",
    "lf_power",
    "hf_power",
    "lf_hf_ratio",
    "sd1",
    "sd2",
    "sample_entropy",
];

/// Eleven standard HRV metrics over an ectopic-filtered sequence.
///
/// Order matches [`BASELINE11_NAMES`]. Spectral bands use the Lomb-Scargle
/// estimator over the whole sequence.
pub fn baseline11(filtered: &[f64]) -> Result<[f64; 11]> {
    const MIN_BEATS: usize = 10;
    if filtered.len() < MIN_BEATS {
        return Err(Error::TooShort {
            what: "baseline HRV metrics",
            needed: MIN_BEATS,
            available: filtered.len(),
        });
    }
    let sd = sdnn(filtered);
    let vlf = band_power(filtered, Band::VLF)?;
    let lf = band_power(filtered, Band::LF)?;
    let hf = band_power(filtered, Band::HF)?;
    let ratio = if hf > 0.0 { lf / hf } else { 0.0 };
    let (sd1, sd2) = poincare(filtered);
    Ok([
        mean(filtered),
        sd,
        rmssd(filtered),
        pnn50(filtered),
        vlf,
        lf,
        hf,
        ratio,
        sd1,
        sd2,
        sample_entropy(filtered, 2, 0.2 * sd)?,
    ])
}
