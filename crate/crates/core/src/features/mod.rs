//! Feature extraction from boundary-truncated tachograms.
//!
//! Two feature families are supported:
//!
//! * `Core`: mean, min and max RR plus LF and HF band power, all over the
//!   last `recent_beats` ectopic-filtered beats, optionally followed by the
//!   two windowed difference features (change in mean RR and in ectopic
//!   count between consecutive half-windows of the last `window_beats` raw
//!   beats).
//! * `Baseline11`: eleven standard HRV metrics over the whole filtered
//!   sequence, used as the reference configuration.

pub mod ectopic;
pub mod hrv;
pub mod spectral;
pub mod standardize;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::dataset::RRRecord;
use crate::error::{Error, Result};

pub use ectopic::{detect_ectopic, remove_flagged};
pub use hrv::{baseline11, time_stats, windowed_diff, TimeStats, WindowedDiff, BASELINE11_NAMES};
pub use spectral::{band_power, Band};
pub use standardize::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    Baseline11,
    Core,
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Baseline11 => "baseline11",
            FeatureSet::Core => "core",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline11" | "baseline" => Ok(FeatureSet::Baseline11),
            "core" => Ok(FeatureSet::Core),
            _ => Err(Error::Config(format!("unknown feature_set `{s}`"))),
        }
    }
}

pub const CORE_NAMES: [&str; 5] = ["mean_rr", "lf_power", "hf_power", "min_rr", "max_rr"];
pub const WINDOWED_NAMES: [&str; 2] = ["delta_mean_rr", "delta_ectopic_count"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub feature_set: FeatureSet,
    pub include_windowed: bool,
    pub recent_beats: usize,
    pub window_beats: usize,
    pub lf_band: Band,
    pub hf_band: Band,
    pub ectopic_threshold: f64,
    pub ectopic_ref_beats: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            feature_set: FeatureSet::Core,
            include_windowed: true,
            recent_beats: 30,
            window_beats: 250,
            lf_band: Band::LF,
            hf_band: Band::HF,
            ectopic_threshold: 0.2,
            ectopic_ref_beats: 5,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_beats < 2 || !self.window_beats.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window_beats must be even and at least 2, got {}",
                self.window_beats
            )));
        }
        if self.recent_beats < 2 {
            return Err(Error::Config("recent_beats must be at least 2".into()));
        }
        for band in [self.lf_band, self.hf_band] {
            Band::new(band.lo, band.hi)?;
        }
        if self.lf_band.hi != self.hf_band.lo {
            return Err(Error::Config(
                "LF band must end where the HF band starts".into(),
            ));
        }
        if !(self.ectopic_threshold > 0.0) {
            return Err(Error::Config("ectopic_threshold must be positive".into()));
        }
        if self.ectopic_ref_beats == 0 {
            return Err(Error::Config("ectopic_ref_beats must be positive".into()));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = match self.feature_set {
            FeatureSet::Baseline11 => BASELINE11_NAMES.to_vec(),
            FeatureSet::Core => CORE_NAMES.to_vec(),
        };
        if self.include_windowed {
            names.extend(WINDOWED_NAMES);
        }
        names
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub record_id: String,
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
}

/// Computes the configured feature vector for one truncated record.
pub fn extract(record: &RRRecord, config: &FeatureConfig) -> Result<FeatureVector> {
    config.validate()?;
    let raw = &record.intervals_ms;
    let mask = detect_ectopic(raw, config.ectopic_threshold, config.ectopic_ref_beats)?;
    let filtered = remove_flagged(raw, &mask);

    let mut values = match config.feature_set {
        FeatureSet::Core => {
            let stats = time_stats(&filtered, config.recent_beats)?;
            let recent = hrv::last_n(&filtered, config.recent_beats, "band power")?;
            vec![
                stats.mean_rr,
                band_power(recent, config.lf_band)?,
                band_power(recent, config.hf_band)?,
                stats.min_rr,
                stats.max_rr,
            ]
        }
        FeatureSet::Baseline11 => baseline11(&filtered)?.to_vec(),
    };
    if config.include_windowed {
        let diff = windowed_diff(raw, &mask, config.window_beats)?;
        values.push(diff.delta_mean_rr);
        values.push(diff.delta_ectopic_count as f64);
    }

    let names = config.names();
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "feature `{}` of record `{}`",
            names[j], record.record_id
        )));
    }
    Ok(FeatureVector {
        record_id: record.record_id.clone(),
        names,
        values,
    })
}

/// Formats with six significant digits, `%g` style.
pub fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `record_id,label,<feature names...>` rows.
pub fn write_feature_csv<W: Write>(
    out: W,
    config: &FeatureConfig,
    rows: &[(FeatureVector, crate::dataset::Label)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["record_id", "label"];
    header.extend(config.names());
    let to_err = |e: csv::Error| Error::Eval(format!("writing feature CSV: {e}"));
    w.write_record(&header).map_err(to_err)?;
    for (fv, label) in rows {
        let mut rec = vec![fv.record_id.clone(), label.to_string()];
        rec.extend(fv.values.iter().map(|&v| fmt_sig6(v)));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Eval(format!("writing feature CSV: {e}")))?;
    Ok(())
}
