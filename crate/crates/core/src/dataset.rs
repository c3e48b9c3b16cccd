//! Tachogram and patient-metadata ingestion, plus the decision boundary.
//!
//! A tachogram file is UTF-8 text with one RR interval in milliseconds per
//! line; the file stem is the record id. Metadata is a CSV with header
//! `record_id,patient_id,label,birth_year,nyhac,bmi`, empty cells meaning
//! unknown.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Exclusive physiological upper bound on a single RR interval.
pub const MAX_INTERVAL_MS: f64 = 5000.0;

pub const DEFAULT_HORIZON_MS: f64 = 60_000.0;

pub const METADATA_HEADER: [&str; 6] = ["record_id", "patient_id", "label", "birth_year", "nyhac", "bmi"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Control,
    /// Pre-VT and pre-VF records pooled.
    Vta,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Vta
    }

    pub fn as_index(self) -> usize {
        match self {
            Label::Control => 0,
            Label::Vta => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Vta => "VTA",
            Label::Control => "Control",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "VTA" => Ok(Label::Vta),
            "Control" => Ok(Label::Control),
            other => Err(Error::Metadata(format!(
                "label must be VTA or Control, got `{other}`"
            ))),
        }
    }
}

/// New York Heart Association functional class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nyhac {
    I,
    II,
    III,
    IV,
}

impl Nyhac {
    pub const COUNT: usize = 4;

    pub fn from_class(class: u8) -> Option<Self> {
        match class {
            1 => Some(Nyhac::I),
            2 => Some(Nyhac::II),
            3 => Some(Nyhac::III),
            4 => Some(Nyhac::IV),
            _ => None,
        }
    }

    /// Zero-based class index used as the classification target.
    pub fn index(self) -> usize {
        match self {
            Nyhac::I => 0,
            Nyhac::II => 1,
            Nyhac::III => 2,
            Nyhac::IV => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientMeta {
    pub patient_id: String,
    /// Birth year rounded to the nearest decade; always divisible by 10.
    pub birth_decade: Option<i32>,
    pub nyhac: Option<Nyhac>,
    /// kg/m², within [10, 100].
    pub bmi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RRRecord {
    pub record_id: String,
    pub intervals_ms: Vec<f64>,
    pub label: Label,
    pub patient_id: String,
    /// Horizon already cut from the end of the sequence, if any.
    pub boundary_ms: Option<f64>,
}

impl RRRecord {
    pub fn duration_ms(&self) -> f64 {
        self.intervals_ms.iter().sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    /// Sorted by record id.
    pub records: Vec<RRRecord>,
    pub patients: BTreeMap<String, PatientMeta>,
}

impl Dataset {
    pub fn meta(&self, record: &RRRecord) -> &PatientMeta {
        // Construction guarantees every record's patient is present.
        &self.patients[&record.patient_id]
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    /// SHA-256 over the parsed contents: every record (id, patient, label,
    /// interval bit patterns) followed by every patient's metadata. Hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            for field in [r.record_id.as_str(), r.patient_id.as_str(), &r.label.to_string()] {
                h.update(field.as_bytes());
                h.update([0u8]);
            }
            h.update((r.intervals_ms.len() as u64).to_le_bytes());
            for v in &r.intervals_ms {
                h.update(v.to_le_bytes());
            }
        }
        for m in self.patients.values() {
            let line = format!(
                "{}\0{:?}\0{:?}\0{:?}\0",
                m.patient_id,
                m.birth_decade,
                m.nyhac.map(Nyhac::index),
                m.bmi.map(f64::to_bits)
            );
            h.update(line.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Rounds a birth year to the nearest decade, halves going up (1945 → 1950).
pub fn round_to_decade(year: i32) -> i32 {
    (year + 5).div_euclid(10) * 10
}

/// Parses one tachogram file.
pub fn read_tachogram(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut intervals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: f64 = line
            .parse()
            .map_err(|_| parse_err(format!("not a number: `{line}`")))?;
        if !(value > 0.0 && value < MAX_INTERVAL_MS) {
            return Err(parse_err(format!(
                "interval {value} ms outside (0, {MAX_INTERVAL_MS}) ms"
            )));
        }
        intervals.push(value);
    }
    if intervals.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no intervals".into(),
        });
    }
    Ok(intervals)
}

struct MetaRow {
    patient_id: String,
    label: Label,
    meta: PatientMeta,
}

fn parse_metadata(path: &Path) -> Result<BTreeMap<String, MetaRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METADATA_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header must be `{}`", METADATA_HEADER.join(",")),
        });
    }

    let mut rows = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |j: usize| row.get(j).unwrap_or("");

        let record_id = field(0).to_string();
        let patient_id = field(1).to_string();
        if record_id.is_empty() || patient_id.is_empty() {
            return Err(bad("record_id and patient_id are required".into()));
        }
        let label: Label = field(2).parse().map_err(|e: Error| bad(e.to_string()))?;
        let birth_decade = match field(3) {
            "" => None,
            s => Some(round_to_decade(
                s.parse()
                    .map_err(|_| bad(format!("birth_year not an integer: `{s}`")))?,
            )),
        };
        let nyhac = match field(4) {
            "" => None,
            s => Some(
                s.parse::<u8>()
                    .ok()
                    .and_then(Nyhac::from_class)
                    .ok_or_else(|| bad(format!("nyhac must be 1-4, got `{s}`")))?,
            ),
        };
        let bmi = match field(5) {
            "" => None,
            s => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| bad(format!("bmi not a number: `{s}`")))?;
                if !(10.0..=100.0).contains(&v) {
                    return Err(bad(format!("bmi {v} outside [10, 100]")));
                }
                Some(v)
            }
        };
        let meta = PatientMeta {
            patient_id: patient_id.clone(),
            birth_decade,
            nyhac,
            bmi,
        };
        if rows
            .insert(
                record_id.clone(),
                MetaRow {
                    patient_id,
                    label,
                    meta,
                },
            )
            .is_some()
        {
            return Err(bad(format!("duplicate record_id `{record_id}`")));
        }
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Every regular, non-hidden file in `dir` except `skip` (the metadata file,
/// which may live alongside the tachograms).
fn tachogram_files(dir: &Path, skip: &Path) -> Result<Vec<(String, PathBuf)>> {
    let skip = fs::canonicalize(skip).ok();
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.starts_with('.') || (skip.is_some() && fs::canonicalize(&path).ok() == skip) {
            continue;
        }
        files.push((stem.to_string(), path));
    }
    files.sort();
    Ok(files)
}

/// Loads every tachogram in `tachogram_dir` (each file is one record, named
/// by its stem) and resolves its metadata row.
///
/// Records come back sorted by record id. A tachogram without a metadata
/// row is an error; metadata rows without a tachogram are ignored.
pub fn load_dataset(tachogram_dir: &Path, metadata_file: &Path) -> Result<Dataset> {
    let meta_rows = parse_metadata(metadata_file)?;
    let mut dataset = Dataset::default();

    for (record_id, path) in tachogram_files(tachogram_dir, metadata_file)? {
        let row = meta_rows
            .get(&record_id)
            .ok_or_else(|| Error::MissingMetadata(record_id.clone()))?;
        let intervals_ms = read_tachogram(&path)?;

        match dataset.patients.get(&row.patient_id) {
            Some(existing) if *existing != row.meta => {
                return Err(Error::Metadata(format!(
                    "patient `{}` has conflicting metadata across records",
                    row.patient_id
                )));
            }
            Some(_) => {}
            None => {
                dataset
                    .patients
                    .insert(row.patient_id.clone(), row.meta.clone());
            }
        }
        dataset.records.push(RRRecord {
            record_id,
            intervals_ms,
            label: row.label,
            patient_id: row.patient_id.clone(),
            boundary_ms: None,
        });
    }
    Ok(dataset)
}

/// Removes the shortest suffix whose total duration reaches `horizon_ms`.
///
/// A record that already carries a boundary is returned unchanged, which
/// makes the operation idempotent.
pub fn apply_decision_boundary(record: &RRRecord, horizon_ms: f64) -> RRRecord {
    if record.boundary_ms.is_some() {
        return record.clone();
    }
    let mut cut = record.intervals_ms.len();
    let mut removed = 0.0;
    while removed < horizon_ms && cut > 0 {
        cut -= 1;
        removed += record.intervals_ms[cut];
    }
    RRRecord {
        intervals_ms: record.intervals_ms[..cut].to_vec(),
        boundary_ms: Some(horizon_ms),
        ..record.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryOptions {
    pub horizon_ms: f64,
    pub truncate_controls: bool,
    /// Minimum beats that must remain before the boundary.
    pub min_beats: usize,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            horizon_ms: DEFAULT_HORIZON_MS,
            truncate_controls: true,
            min_beats: 250,
        }
    }
}

/// Applies the boundary to every record, dropping those left with fewer
/// than `min_beats` intervals. Returns the excluded record ids.
pub fn apply_boundaries(dataset: &mut Dataset, opts: &BoundaryOptions) -> Vec<String> {
    let mut excluded = Vec::new();
    let mut kept = Vec::with_capacity(dataset.records.len());
    for record in dataset.records.drain(..) {
        let horizon = if record.label == Label::Control && !opts.truncate_controls {
            0.0
        } else {
            opts.horizon_ms
        };
        let truncated = apply_decision_boundary(&record, horizon);
        if truncated.intervals_ms.len() < opts.min_beats.max(1) {
            warn!(
                "excluding record {}: {} beats remain before the boundary, need {}",
                truncated.record_id,
                truncated.intervals_ms.len(),
                opts.min_beats
            );
            excluded.push(truncated.record_id);
        } else {
            kept.push(truncated);
        }
    }
    dataset.records = kept;
    let used: std::collections::BTreeSet<&str> =
        dataset.records.iter().map(|r| r.patient_id.as_str()).collect();
    dataset.patients.retain(|id, _| used.contains(id.as_str()));
    excluded
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn record(intervals: Vec<f64>) -> RRRecord {
        RRRecord {
            record_id: "r".into(),
            intervals_ms: intervals,
            label: Label::Vta,
            patient_id: "p".into(),
            boundary_ms: None,
        }
    }

    #[test]
    fn decade_rounding() {
        assert_eq!(round_to_decade(1946), 1950);
        assert_eq!(round_to_decade(1945), 1950);
        assert_eq!(round_to_decade(1944), 1940);
        assert_eq!(round_to_decade(1950), 1950);
    }

    #[test]
    fn boundary_constant_600() {
        let r = apply_decision_boundary(&record(vec![600.0; 1024]), 60_000.0);
        assert_eq!(r.intervals_ms.len(), 924);
    }

    #[test]
    fn boundary_zero_horizon_is_noop() {
        let r = record(vec![700.0, 800.0]);
        assert_eq!(apply_decision_boundary(&r, 0.0).intervals_ms, r.intervals_ms);
    }

    #[test]
    fn boundary_minimal_suffix() {
        let r = apply_decision_boundary(&record(vec![800.0, 800.0, 900.0, 59_500.0]), 60_000.0);
        assert_eq!(r.intervals_ms, vec![800.0, 800.0]);
    }

    #[test]
    fn short_records_are_excluded() {
        let mut ds = Dataset::default();
        ds.records.push(record(vec![600.0; 300]));
        ds.records.push(RRRecord {
            record_id: "long".into(),
            ..record(vec![600.0; 400])
        });
        ds.patients.insert(
            "p".into(),
            PatientMeta {
                patient_id: "p".into(),
                birth_decade: None,
                nyhac: None,
                bmi: None,
            },
        );
        let excluded = apply_boundaries(&mut ds, &BoundaryOptions::default());
        assert_eq!(excluded, vec!["r".to_string()]);
        assert_eq!(ds.records[0].intervals_ms.len(), 300);
    }

    #[test]
    fn controls_can_skip_truncation() {
        let mut ds = Dataset::default();
        ds.records.push(RRRecord {
            label: Label::Control,
            ..record(vec![600.0; 400])
        });
        let opts = BoundaryOptions {
            truncate_controls: false,
            ..Default::default()
        };
        apply_boundaries(&mut ds, &opts);
        assert_eq!(ds.records[0].intervals_ms.len(), 400);
    }

    #[test]
    fn negative_interval_names_file_and_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "800\n810\n-10\n790").unwrap();
        let err = read_tachogram(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(err.contains(&f.path().display().to_string()));
    }

    #[test]
    fn non_numeric_line_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "800\nabc").unwrap();
        assert!(matches!(
            read_tachogram(f.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn out_of_range_interval_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "800\n5000").unwrap();
        assert!(read_tachogram(f.path()).is_err());
    }

    proptest! {
        #[test]
        fn boundary_idempotent_and_minimal(
            intervals in prop::collection::vec(200.0f64..2000.0, 1..400),
            horizon in 0.0f64..120_000.0,
        ) {
            let r = record(intervals.clone());
            let once = apply_decision_boundary(&r, horizon);
            let twice = apply_decision_boundary(&once, horizon);
            prop_assert_eq!(&once, &twice);

            let removed = &intervals[once.intervals_ms.len()..];
            let total: f64 = removed.iter().sum();
            if !once.intervals_ms.is_empty() {
                prop_assert!(total >= horizon);
            }
            if let Some((first, rest)) = removed.split_first() {
                let _ = first;
                prop_assert!(rest.iter().sum::<f64>() < horizon);
            }
        }
    }
}
