//! Seeded synthetic data: a separable Gaussian feature task and a tachogram
//! corpus in the on-disk dataset format. Used by tests, the acceptance suite
//! and the CLI smoke runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Label, Nyhac, PatientMeta, RRRecord, METADATA_HEADER};
use crate::error::{Error, Result};
use crate::eval::Sample;
use crate::rng::{derive, stream};

const DECADES: [i32; 6] = [1920, 1930, 1940, 1950, 1960, 1970];

/// `n` samples, half VTA, whose `dims` raw features are drawn from
/// N(+1, 0.3²) for VTA and N(-1, 0.3²) for controls. NYHA class and BMI are
/// label-correlated auxiliary targets, each missing for about 10% of samples.
pub fn gaussian_task(n: usize, dims: usize, seed: u64) -> Vec<Sample> {
    let mut rng = derive(seed, &[stream::SYNTHETIC, 1]);
    let noise = Normal::new(0.0, 0.3).expect("valid sigma");
    let bmi_noise = Normal::new(0.0, 2.0).expect("valid sigma");
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Vta } else { Label::Control };
            let centre = if label.is_positive() { 1.0 } else { -1.0 };
            let features = (0..dims).map(|_| centre + noise.sample(&mut rng)).collect();
            let birth_decade = if rng.random::<f64>() < 0.1 {
                None
            } else {
                Some(DECADES[rng.random_range(0..DECADES.len())])
            };
            let class = u8::from(label.is_positive()) * 2 + rng.random_range(1..=2);
            let nyhac = (rng.random::<f64>() >= 0.1).then(|| Nyhac::from_class(class).expect("1..=4"));
            let bmi_value: f64 = 24.0 + if label.is_positive() { 4.0 } else { 0.0 } + bmi_noise.sample(&mut rng);
            let bmi = (rng.random::<f64>() >= 0.1).then(|| bmi_value.clamp(10.0, 100.0));
            Sample {
                record_id: format!("g{i:04}"),
                patient_id: format!("gp{:03}", i / 2),
                label,
                features,
                birth_decade,
                nyhac,
                bmi,
            }
        })
        .collect()
}

/// Parameters of the synthetic tachogram corpus.
#[derive(Debug, Clone)]
pub struct TachogramSpec {
    pub vta: usize,
    pub control: usize,
    pub beats: usize,
    /// Records per patient (the last patient may have fewer).
    pub records_per_patient: usize,
}

impl Default for TachogramSpec {
    fn default() -> Self {
        TachogramSpec {
            vta: 30,
            control: 30,
            beats: 1024,
            records_per_patient: 2,
        }
    }
}

/// Generates tachograms with respiratory and Mayer-wave modulation plus
/// occasional premature beats. VTA records accelerate and grow more ectopic
/// over their final few hundred beats; controls stay stationary.
pub fn tachogram_dataset(spec: &TachogramSpec, seed: u64) -> Dataset {
    let mut rng = derive(seed, &[stream::SYNTHETIC, 2]);
    let walk = Normal::new(0.0, 3.0).expect("valid sigma");
    let mut dataset = Dataset::default();
    let total = spec.vta + spec.control;
    let per_patient = spec.records_per_patient.max(1);

    for i in 0..total {
        let label = if i < spec.vta { Label::Vta } else { Label::Control };
        let record_id = format!("{}{:03}", if label.is_positive() { "v" } else { "c" }, i);
        let patient_id = format!("p{:03}", i / per_patient);

        let base: f64 = rng.random_range(700.0..950.0);
        let resp_amp: f64 = rng.random_range(10.0..30.0);
        let mayer_amp: f64 = rng.random_range(5.0..20.0);
        let mut drift = 0.0;
        let mut t = 0.0;
        let mut intervals = Vec::with_capacity(spec.beats);
        let mut compensate = None;
        for b in 0..spec.beats {
            // Progress through the pre-event ramp, 0 outside it.
            let ramp = if label.is_positive() {
                ((b as f64 - (spec.beats as f64 - 420.0)) / 300.0).clamp(0.0, 1.0)
            } else {
                0.0
            };
            drift = 0.98 * drift + walk.sample(&mut rng);
            let tau = std::f64::consts::TAU;
            let mut rr = base * (1.0 - 0.18 * ramp)
                + drift
                + resp_amp * (tau * 0.25 * t).sin()
                + mayer_amp * (tau * 0.1 * t).sin();
            if let Some(extra) = compensate.take() {
                rr += extra;
            } else if rng.random::<f64>() < 0.01 + 0.07 * ramp {
                let shortening = rr * 0.4;
                rr -= shortening;
                compensate = Some(shortening * 0.9);
            }
            let rr = rr.clamp(250.0, 2000.0);
            t += rr / 1000.0;
            intervals.push(rr);
        }

        let meta = dataset.patients.entry(patient_id.clone()).or_insert_with(|| PatientMeta {
            patient_id: patient_id.clone(),
            birth_decade: (rng.random::<f64>() >= 0.1).then(|| DECADES[rng.random_range(0..DECADES.len())]),
            nyhac: (rng.random::<f64>() >= 0.2).then(|| Nyhac::from_class(rng.random_range(1..=4)).expect("1..=4")),
            bmi: (rng.random::<f64>() >= 0.2).then(|| (rng.random_range(18.0..40.0f64) * 10.0).round() / 10.0),
        });
        let _ = meta;
        dataset.records.push(RRRecord {
            record_id,
            intervals_ms: intervals,
            label,
            patient_id,
            boundary_ms: None,
        });
    }
    dataset.records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    dataset
}

/// Writes `dataset` in the tachogram-directory + metadata-CSV format.
/// Birth decades are written as birth years (the decade itself).
pub fn write_dataset(dataset: &Dataset, tachogram_dir: &Path, metadata_file: &Path) -> Result<()> {
    fs::create_dir_all(tachogram_dir).map_err(|e| Error::io(tachogram_dir, e))?;
    for record in &dataset.records {
        let path = tachogram_dir.join(format!("{}.txt", record.record_id));
        let mut text = String::with_capacity(record.intervals_ms.len() * 8);
        for rr in &record.intervals_ms {
            text.push_str(&format!("{rr:.3}\n"));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }

    let mut f = fs::File::create(metadata_file).map_err(|e| Error::io(metadata_file, e))?;
    let mut out = String::new();
    out.push_str(&METADATA_HEADER.join(","));
    out.push('\n');
    let patients: BTreeMap<_, _> = dataset.patients.iter().collect();
    for record in &dataset.records {
        let meta = patients[&record.patient_id];
        let nyhac = meta.nyhac.map(|n| (n.index() + 1).to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            record.record_id,
            record.patient_id,
            record.label,
            meta.birth_decade.map(|d| d.to_string()).unwrap_or_default(),
            nyhac,
            meta.bmi.map(|b| b.to_string()).unwrap_or_default(),
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(metadata_file, e))
}
