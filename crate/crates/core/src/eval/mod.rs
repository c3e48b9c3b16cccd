//! Stratified cross-validation, metrics and the four-row ablation grid.
//!
//! Every (row, seed, fold) work item owns PRNG streams derived from
//! `(seed, fold)`, so serial and parallel schedules give identical results.
//! Fold plans depend only on the seed, so all ablation rows see the same
//! partitions.

pub mod folds;
pub mod metrics;
pub mod report;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::dataset::{Dataset, Label, Nyhac};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureConfig, FeatureSet, Standardizer};
use crate::nn::{forward_batch, DecadeVocab, Example, Mode, NetworkParams, NetworkShape, TaskWeights, DEFAULT_HIDDEN};
use crate::optim::{train, TrainConfig};
use crate::rng::{derive, stream};

pub use folds::{make_folds, make_grouped_folds, FoldPlan};
pub use metrics::{auc, metrics, Confusion, Metrics, Prediction, DEFAULT_THRESHOLD};
pub use report::{EvalReport, RowSummary, RunResult};

/// One record reduced to raw (unstandardized) features plus its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record_id: String,
    pub patient_id: String,
    pub label: Label,
    pub features: Vec<f64>,
    pub birth_decade: Option<i32>,
    pub nyhac: Option<Nyhac>,
    pub bmi: Option<f64>,
}

/// Extracts features for every record. Records whose features cannot be
/// computed are skipped with a warning and their ids returned.
pub fn prepare_samples(dataset: &Dataset, config: &FeatureConfig) -> Result<(Vec<Sample>, Vec<String>)> {
    config.validate()?;
    let mut samples = Vec::with_capacity(dataset.records.len());
    let mut excluded = Vec::new();
    for record in &dataset.records {
        match extract(record, config) {
            Ok(fv) => {
                let meta = dataset.meta(record);
                samples.push(Sample {
                    record_id: record.record_id.clone(),
                    patient_id: record.patient_id.clone(),
                    label: record.label,
                    features: fv.values,
                    birth_decade: meta.birth_decade,
                    nyhac: meta.nyhac,
                    bmi: meta.bmi,
                });
            }
            Err(e @ (Error::TooShort { .. } | Error::NonFinite(_))) => {
                warn!("excluding record {}: {e}", record.record_id);
                excluded.push(record.record_id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((samples, excluded))
}

/// The four configurations of the ablation table, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationRow {
    Baseline,
    PlusWindowed,
    PlusAgeEmbedding,
    PlusMultiTask,
}

impl AblationRow {
    pub const ALL: [AblationRow; 4] = [
        AblationRow::Baseline,
        AblationRow::PlusWindowed,
        AblationRow::PlusAgeEmbedding,
        AblationRow::PlusMultiTask,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationRow::Baseline => "Baseline",
            AblationRow::PlusWindowed => "+ windowed features",
            AblationRow::PlusAgeEmbedding => "+ age embedding",
            AblationRow::PlusMultiTask => "+ multi-task optimization",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            AblationRow::Baseline => "baseline",
            AblationRow::PlusWindowed => "windowed",
            AblationRow::PlusAgeEmbedding => "age_embedding",
            AblationRow::PlusMultiTask => "multi_task",
        }
    }

    pub fn feature_config(self, base: &FeatureConfig) -> FeatureConfig {
        match self {
            AblationRow::Baseline => FeatureConfig {
                feature_set: FeatureSet::Baseline11,
                include_windowed: false,
                ..base.clone()
            },
            _ => FeatureConfig {
                feature_set: FeatureSet::Core,
                include_windowed: true,
                ..base.clone()
            },
        }
    }

    pub fn use_embedding(self) -> bool {
        matches!(self, AblationRow::PlusAgeEmbedding | AblationRow::PlusMultiTask)
    }

    /// Auxiliary loss weights: zero except in the multi-task row, which uses
    /// the supplied weights.
    pub fn weights(self, multi_task: TaskWeights) -> TaskWeights {
        match self {
            AblationRow::PlusMultiTask => multi_task,
            _ => TaskWeights::SINGLE_TASK,
        }
    }
}

impl fmt::Display for AblationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AblationRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationRow::ALL
            .into_iter()
            .find(|r| r.label() == s || r.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation row `{s}`")))
    }
}

/// Everything a cross-validation run needs besides the data and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSetup {
    pub train: TrainConfig,
    pub use_embedding: bool,
    pub vocab: DecadeVocab,
    pub hidden: [usize; 3],
    pub folds: usize,
    pub patient_grouped: bool,
    pub threshold: f64,
}

impl Default for CvSetup {
    fn default() -> Self {
        CvSetup {
            train: TrainConfig::default(),
            use_embedding: true,
            vocab: DecadeVocab::default(),
            hidden: DEFAULT_HIDDEN,
            folds: 10,
            patient_grouped: false,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl CvSetup {
    pub fn shape(&self, features: usize) -> NetworkShape {
        NetworkShape {
            hidden: self.hidden,
            ..NetworkShape::new(features, self.use_embedding.then(|| self.vocab.rows()))
        }
    }
}

/// Scalers fit on one fold's training portion.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScalers {
    pub features: Standardizer,
    pub bmi: Option<Standardizer>,
}

pub fn fit_scalers(samples: &[Sample], train_idx: &[usize]) -> Result<FoldScalers> {
    let rows: Vec<&[f64]> = train_idx.iter().map(|&i| samples[i].features.as_slice()).collect();
    let features = Standardizer::fit(&rows)?;
    let bmis: Vec<[f64; 1]> = train_idx.iter().filter_map(|&i| samples[i].bmi.map(|b| [b])).collect();
    let bmi = if bmis.is_empty() {
        None
    } else {
        Some(Standardizer::fit(&bmis)?)
    };
    Ok(FoldScalers { features, bmi })
}

pub fn to_example(sample: &Sample, scalers: &FoldScalers, vocab: &DecadeVocab) -> Result<Example> {
    Ok(Example {
        features: scalers.features.transform(&sample.features)?,
        decade_index: vocab.index(sample.birth_decade),
        y_vta: sample.label.as_index(),
        y_nyhac: sample.nyhac.map(Nyhac::index),
        y_bmi: match (&scalers.bmi, sample.bmi) {
            (Some(s), Some(b)) => Some(s.transform_value(0, b)),
            _ => None,
        },
    })
}

pub fn plan_folds(samples: &[Sample], setup: &CvSetup, seed: u64) -> Result<FoldPlan> {
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let mut rng = derive(seed, &[stream::FOLDS]);
    if setup.patient_grouped {
        let groups: Vec<String> = samples.iter().map(|s| s.patient_id.clone()).collect();
        make_grouped_folds(&labels, &groups, setup.folds, &mut rng)
    } else {
        make_folds(&labels, setup.folds, &mut rng)
    }
}

/// Trains on every fold but `fold` and returns `(sample index, probability)`
/// for the held-out samples.
pub fn run_fold(samples: &[Sample], plan: &FoldPlan, fold: usize, setup: &CvSetup, seed: u64) -> Result<Vec<(usize, f64)>> {
    let wrap = |e: Error| Error::Fold {
        fold,
        source: Box::new(e),
    };
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let scalers = fit_scalers(samples, &train_idx).map_err(wrap)?;
    let to_examples = |idx: &[usize]| -> Result<Vec<Example>> {
        idx.iter().map(|&i| to_example(&samples[i], &scalers, &setup.vocab)).collect()
    };
    let train_set = to_examples(&train_idx).map_err(wrap)?;
    let test_set = to_examples(&test_idx).map_err(wrap)?;

    let dim = samples.first().map_or(0, |s| s.features.len());
    let fold_id = fold as u64;
    let params = NetworkParams::init(setup.shape(dim), &mut derive(seed, &[fold_id, stream::INIT]));
    let mut dropout_rng = derive(seed, &[fold_id, stream::DROPOUT]);
    let outcome = train(&train_set, &setup.train, params, &mut dropout_rng).map_err(wrap)?;

    let fwd = forward_batch(&outcome.params, &test_set, Mode::Infer, [true, false, false]).map_err(wrap)?;
    Ok(test_idx.into_iter().zip(fwd.vta_positive()).collect())
}

fn pool_predictions(samples: &[Sample], per_fold: Vec<Vec<(usize, f64)>>) -> Vec<Prediction> {
    let mut pooled: Vec<(usize, f64)> = per_fold.into_iter().flatten().collect();
    pooled.sort_by_key(|&(i, _)| i);
    pooled
        .into_iter()
        .map(|(i, p)| Prediction {
            record_id: samples[i].record_id.clone(),
            label: samples[i].label,
            probability: p,
        })
        .collect()
}

/// k-fold cross-validation; held-out predictions pooled in sample order.
pub fn run_cv(samples: &[Sample], setup: &CvSetup, seed: u64) -> Result<Vec<Prediction>> {
    let plan = plan_folds(samples, setup, seed)?;
    let per_fold = (0..plan.k)
        .into_par_iter()
        .map(|fold| run_fold(samples, &plan, fold, setup, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool_predictions(samples, per_fold))
}

/// Per-row sample tables, in [`AblationRow::ALL`] order.
pub type RowTables = Vec<(AblationRow, Vec<Sample>)>;

/// Inputs for the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSetup {
    pub features: FeatureConfig,
    pub cv: CvSetup,
    /// Loss weights for the multi-task row.
    pub multi_task: TaskWeights,
    pub seeds: Vec<u64>,
}

/// Feature tables for every ablation row (rows sharing a feature config
/// share a table). Samples are restricted to records usable by every row so
/// all rows are evaluated on the same set.
pub fn prepare_rows(dataset: &Dataset, base: &FeatureConfig) -> Result<(RowTables, Vec<String>)> {
    let mut tables = Vec::new();
    let mut excluded = std::collections::BTreeSet::new();
    for row in AblationRow::ALL {
        let (samples, skipped) = prepare_samples(dataset, &row.feature_config(base))?;
        excluded.extend(skipped);
        tables.push((row, samples));
    }
    for (_, samples) in &mut tables {
        samples.retain(|s| !excluded.contains(&s.record_id));
    }
    Ok((tables, excluded.into_iter().collect()))
}

/// Runs every (row, seed) cross-validation and summarizes.
pub fn run_ablation(tables: &[(AblationRow, Vec<Sample>)], setup: &AblationSetup) -> Result<EvalReport> {
    struct Item<'a> {
        row: AblationRow,
        samples: &'a [Sample],
        seed: u64,
        plan: FoldPlan,
        fold: usize,
        cv: CvSetup,
    }

    let mut items = Vec::new();
    for (row, samples) in tables {
        let cv = CvSetup {
            use_embedding: row.use_embedding(),
            train: TrainConfig {
                weights: row.weights(setup.multi_task),
                ..setup.cv.train.clone()
            },
            ..setup.cv.clone()
        };
        for &seed in &setup.seeds {
            let plan = plan_folds(samples, &cv, seed).map_err(|e| Error::Run {
                row: row.label().into(),
                seed,
                source: Box::new(e),
            })?;
            for fold in 0..plan.k {
                items.push(Item {
                    row: *row,
                    samples,
                    seed,
                    plan: plan.clone(),
                    fold,
                    cv: cv.clone(),
                });
            }
        }
    }

    let results = items
        .par_iter()
        .map(|it| {
            run_fold(it.samples, &it.plan, it.fold, &it.cv, it.seed).map_err(|e| Error::Run {
                row: it.row.label().into(),
                seed: it.seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    let mut cursor = 0;
    for (row, samples) in tables {
        for &seed in &setup.seeds {
            let k = items[cursor].plan.k;
            let per_fold = results[cursor..cursor + k].to_vec();
            cursor += k;
            let predictions = pool_predictions(samples, per_fold);
            runs.push(RunResult::new(*row, seed, predictions, setup.cv.threshold).map_err(|e| Error::Run {
                row: row.label().into(),
                seed,
                source: Box::new(e),
            })?);
        }
    }
    Ok(EvalReport::from_runs(runs))
}

/// Returns a copy of `samples` with labels permuted by a seeded shuffle.
pub fn shuffle_labels(samples: &[Sample], seed: u64) -> Vec<Sample> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    labels.shuffle(&mut derive(seed, &[stream::SHUFFLE]));
    samples
        .iter()
        .zip(labels)
        .map(|(s, label)| Sample { label, ..s.clone() })
        .collect()
}
