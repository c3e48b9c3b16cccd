//! A trained network bundled with everything needed to score new
//! tachograms: the feature configuration, the fitted scalers and the decade
//! vocabulary. Serialized as a [`Checkpoint`] whose config echo is a full
//! [`Config`].

use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{fit_scalers, to_example, FoldScalers, Sample};
use crate::features::{extract, Standardizer};
use crate::dataset::{Label, RRRecord};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{forward_batch, Example, Mode, NetworkParams, NetworkShape};
use crate::optim::{train, TrainOutcome};
use crate::rng::{derive, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: Config,
    pub params: NetworkParams,
    pub scalers: FoldScalers,
}

/// Network shape for `config` with `features` inputs.
pub fn shape_for(config: &Config, features: usize) -> NetworkShape {
    config.cv_setup().shape(features)
}

/// Trains on every sample. The initial weights come from `(seed, INIT)` and
/// dropout from `(seed, DROPOUT)`, where `seed` is `config.train.seed`.
pub fn fit(samples: &[Sample], config: &Config) -> Result<(Model, TrainOutcome)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Eval("no usable records to train on".into()));
    }
    let all: Vec<usize> = (0..samples.len()).collect();
    let scalers = fit_scalers(samples, &all)?;
    let examples = samples
        .iter()
        .map(|s| to_example(s, &scalers, &config.vocab))
        .collect::<Result<Vec<_>>>()?;
    let seed = config.train.seed;
    let params = initial_params(config, samples[0].features.len());
    let outcome = train(&examples, &config.train, params, &mut derive(seed, &[stream::DROPOUT]))?;
    let model = Model {
        config: config.clone(),
        params: outcome.params.clone(),
        scalers,
    };
    Ok((model, outcome))
}

/// The parameters [`fit`] starts from.
pub fn initial_params(config: &Config, features: usize) -> NetworkParams {
    NetworkParams::init(shape_for(config, features), &mut derive(config.train.seed, &[stream::INIT]))
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_echo: self.config.echo(),
            params: self.params.clone(),
            scaler: Some(self.scalers.features.clone()),
            bmi_range: self.scalers.bmi.as_ref().map(|s| (s.min[0], s.max[0])),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut config = Config::default();
        config
            .apply_text(&ckpt.config_echo)
            .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
        let features = ckpt
            .scaler
            .ok_or_else(|| Error::Checkpoint("no feature scaler stored".into()))?;
        let expected = config.features.dim();
        if features.dim() != expected || ckpt.params.shape.features != expected {
            return Err(Error::Dimension {
                expected,
                got: ckpt.params.shape.features,
            });
        }
        let bmi = ckpt.bmi_range.map(|(lo, hi)| Standardizer { min: vec![lo], max: vec![hi] });
        Ok(Model {
            config,
            params: ckpt.params,
            scalers: FoldScalers { features, bmi },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Model::from_checkpoint(Checkpoint::load(path, None)?)
    }

    /// Positive-class probability for raw feature vectors (unscaled), one per
    /// entry of `features`, with the matching birth decades.
    pub fn predict_features(&self, features: &[Vec<f64>], decades: &[Option<i32>]) -> Result<Vec<f64>> {
        if features.len() != decades.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                got: decades.len(),
            });
        }
        let examples = features
            .iter()
            .zip(decades)
            .map(|(f, &d)| {
                Ok(Example {
                    features: self.scalers.features.transform(f)?,
                    decade_index: self.config.vocab.index(d),
                    y_vta: 0,
                    y_nyhac: None,
                    y_bmi: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(forward_batch(&self.params, &examples, Mode::Infer, [true, false, false])?.vta_positive())
    }

    /// Scores one tachogram. `intervals_ms` are the beats preceding the
    /// prediction time; no decision boundary is applied.
    pub fn predict_intervals(&self, intervals_ms: &[f64], birth_decade: Option<i32>) -> Result<f64> {
        let record = RRRecord {
            record_id: String::new(),
            intervals_ms: intervals_ms.to_vec(),
            label: Label::Control,
            patient_id: String::new(),
            boundary_ms: None,
        };
        let fv = extract(&record, &self.config.features)?;
        Ok(self.predict_features(&[fv.values], &[birth_decade])?[0])
    }
}
