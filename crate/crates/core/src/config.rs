//! Flat `key = value` run configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. The same keys
//! can be overridden on the command line, which wins over the file, which
//! wins over the defaults. [`Config::echo`] renders every key in a fixed
//! order and parses back to an identical configuration.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::BoundaryOptions;
use crate::error::{Error, Result};
use crate::eval::{AblationSetup, CvSetup, DEFAULT_THRESHOLD};
use crate::features::FeatureConfig;
use crate::nn::{DecadeVocab, TaskWeights, DEFAULT_HIDDEN};
use crate::optim::TrainConfig;

/// Every recognised key, in echo order.
pub const KEYS: [&str; 31] = [
    "feature_set",
    "include_windowed",
    "recent_beats",
    "window_beats",
    "lf_lo",
    "lf_hi",
    "hf_lo",
    "hf_hi",
    "ectopic_threshold",
    "ectopic_ref_beats",
    "horizon_ms",
    "truncate_controls",
    "min_beats",
    "hidden",
    "use_embedding",
    "decade_first",
    "decade_last",
    "epochs",
    "clip",
    "clip_mode",
    "keep_prob",
    "lambda_nyhac",
    "lambda_bmi",
    "rho",
    "eps",
    "lr",
    "seed",
    "seeds",
    "folds",
    "patient_grouped",
    "threshold",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub features: FeatureConfig,
    pub boundary: BoundaryOptions,
    /// `weights` holds the auxiliary loss weights used when multi-task
    /// training is on; `seed` is the base seed.
    pub train: TrainConfig,
    pub hidden: [usize; 3],
    pub use_embedding: bool,
    pub vocab: DecadeVocab,
    /// Number of consecutive seeds, starting at `train.seed`, for the ablation.
    pub seeds: usize,
    pub folds: usize,
    pub patient_grouped: bool,
    pub threshold: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            features: FeatureConfig::default(),
            boundary: BoundaryOptions::default(),
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN,
            use_embedding: true,
            vocab: DecadeVocab::default(),
            seeds: 10,
            folds: 10,
            patient_grouped: false,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl Config {
    /// Reads `path` on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Config::default();
        config.apply_file(path)?;
        Ok(config)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{assignment}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = &mut self.features;
        let t = &mut self.train;
        match key {
            "feature_set" => f.feature_set = value.parse()?,
            "include_windowed" => f.include_windowed = parse_bool(key, value)?,
            "recent_beats" => f.recent_beats = parse(key, value)?,
            "window_beats" => f.window_beats = parse(key, value)?,
            "lf_lo" => f.lf_band.lo = parse(key, value)?,
            "lf_hi" => f.lf_band.hi = parse(key, value)?,
            "hf_lo" => f.hf_band.lo = parse(key, value)?,
            "hf_hi" => f.hf_band.hi = parse(key, value)?,
            "ectopic_threshold" => f.ectopic_threshold = parse(key, value)?,
            "ectopic_ref_beats" => f.ectopic_ref_beats = parse(key, value)?,
            "horizon_ms" => self.boundary.horizon_ms = parse(key, value)?,
            "truncate_controls" => self.boundary.truncate_controls = parse_bool(key, value)?,
            "min_beats" => self.boundary.min_beats = parse(key, value)?,
            "hidden" => {
                let sizes: Vec<usize> = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
                self.hidden = sizes
                    .try_into()
                    .map_err(|_| Error::Config(format!("`hidden` needs three sizes, got `{value}`")))?;
            }
            "use_embedding" => self.use_embedding = parse_bool(key, value)?,
            "decade_first" => self.vocab.first = parse(key, value)?,
            "decade_last" => self.vocab.last = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "clip" => t.clip = parse(key, value)?,
            "clip_mode" => t.clip_mode = value.parse()?,
            "keep_prob" => t.keep_prob = parse(key, value)?,
            "lambda_nyhac" => t.weights.nyhac = parse(key, value)?,
            "lambda_bmi" => t.weights.bmi = parse(key, value)?,
            "rho" => t.adadelta.rho = parse(key, value)?,
            "eps" => t.adadelta.eps = parse(key, value)?,
            "lr" => t.adadelta.lr = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "patient_grouped" => self.patient_grouped = parse_bool(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let f = &self.features;
        let t = &self.train;
        Some(match key {
            "feature_set" => f.feature_set.to_string(),
            "include_windowed" => f.include_windowed.to_string(),
            "recent_beats" => f.recent_beats.to_string(),
            "window_beats" => f.window_beats.to_string(),
            "lf_lo" => f.lf_band.lo.to_string(),
            "lf_hi" => f.lf_band.hi.to_string(),
            "hf_lo" => f.hf_band.lo.to_string(),
            "hf_hi" => f.hf_band.hi.to_string(),
            "ectopic_threshold" => f.ectopic_threshold.to_string(),
            "ectopic_ref_beats" => f.ectopic_ref_beats.to_string(),
            "horizon_ms" => self.boundary.horizon_ms.to_string(),
            "truncate_controls" => self.boundary.truncate_controls.to_string(),
            "min_beats" => self.boundary.min_beats.to_string(),
            "hidden" => self.hidden.map(|h| h.to_string()).join(","),
            "use_embedding" => self.use_embedding.to_string(),
            "decade_first" => self.vocab.first.to_string(),
            "decade_last" => self.vocab.last.to_string(),
            "epochs" => t.epochs.to_string(),
            "clip" => t.clip.to_string(),
            "clip_mode" => t.clip_mode.to_string(),
            "keep_prob" => t.keep_prob.to_string(),
            "lambda_nyhac" => t.weights.nyhac.to_string(),
            "lambda_bmi" => t.weights.bmi.to_string(),
            "rho" => t.adadelta.rho.to_string(),
            "eps" => t.adadelta.eps.to_string(),
            "lr" => t.adadelta.lr.to_string(),
            "seed" => t.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "folds" => self.folds.to_string(),
            "patient_grouped" => self.patient_grouped.to_string(),
            "threshold" => self.threshold.to_string(),
            _ => return None,
        })
    }

    /// Every key as `key=value`, one per line, in [`KEYS`] order.
    pub fn echo(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("every listed key has a value")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        if !(self.boundary.horizon_ms >= 0.0) {
            return Err(Error::Config("horizon_ms must be non-negative".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.vocab.last < self.vocab.first || (self.vocab.last - self.vocab.first) % 10 != 0 {
            return Err(Error::Config(
                "decade_last must be decade_first plus a multiple of 10".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.train.seed + i).collect()
    }

    pub fn cv_setup(&self) -> CvSetup {
        CvSetup {
            train: self.train.clone(),
            use_embedding: self.use_embedding,
            vocab: self.vocab,
            hidden: self.hidden,
            folds: self.folds,
            patient_grouped: self.patient_grouped,
            threshold: self.threshold,
        }
    }

    pub fn ablation_setup(&self) -> AblationSetup {
        AblationSetup {
            features: self.features.clone(),
            cv: self.cv_setup(),
            multi_task: self.train.weights,
            seeds: self.seed_list(),
        }
    }

    pub fn set_single_task(&mut self) {
        self.train.weights = TaskWeights::SINGLE_TASK;
    }
}
