//! AdaDelta with gradient clipping, and the full-batch training loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::debug;

use crate::error::{Error, Result};
use crate::nn::{backward_batch, forward_batch, DropoutMask, Example, LossBreakdown, Mode, NetworkParams, Task, TaskWeights};
use crate::rng::Rng;

/// How the gradient clip threshold is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipMode {
    /// Every element clamped to `[-c, c]`.
    Element,
    /// The whole gradient rescaled so its global L2 norm is at most `c`.
    GlobalNorm,
}

impl fmt::Display for ClipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipMode::Element => "element",
            ClipMode::GlobalNorm => "norm",
        })
    }
}

impl FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element" | "value" => Ok(ClipMode::Element),
            "norm" | "global_norm" => Ok(ClipMode::GlobalNorm),
            _ => Err(Error::Config(format!("unknown clip_mode `{s}`"))),
        }
    }
}

/// Clamps every element to `[-c, c]`.
pub fn clip(grad: &mut [f64], c: f64) {
    for g in grad {
        *g = g.clamp(-c, c);
    }
}

/// Rescales all tensors jointly so their combined L2 norm is at most `c`.
pub fn clip_global_norm(grads: &mut [&mut [f64]], c: f64) {
    let norm = grads
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > c {
        let scale = c / norm;
        for t in grads.iter_mut() {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig {
            rho: 0.95,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

/// Running averages of squared gradients and squared updates, one buffer
/// per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub config: AdaDeltaConfig,
    pub sq_grad: Vec<Vec<f64>>,
    pub sq_update: Vec<Vec<f64>>,
}

impl AdaDeltaState {
    pub fn new(params: &NetworkParams, config: AdaDeltaConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdaDeltaState {
            config,
            sq_grad: zeros.clone(),
            sq_update: zeros,
        }
    }

    /// One AdaDelta update of `params` from `grads` (already clipped).
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        let names = grads.tensor_names();
        let grad_tensors = grads.tensors();
        if let Some(i) = grad_tensors.iter().position(|t| t.iter().any(|g| g.is_nan())) {
            return Err(Error::NonFinite(format!("gradient of `{}`", names[i])));
        }
        let AdaDeltaConfig { rho, eps, lr } = self.config;
        let mut param_tensors = params.tensors_mut();
        if param_tensors.len() != grad_tensors.len() || param_tensors.len() != self.sq_grad.len() {
            return Err(Error::Dimension {
                expected: self.sq_grad.len(),
                got: grad_tensors.len(),
            });
        }
        for (((x, g), eg), ed) in param_tensors
            .iter_mut()
            .zip(&grad_tensors)
            .zip(&mut self.sq_grad)
            .zip(&mut self.sq_update)
        {
            if x.len() != g.len() || x.len() != eg.len() {
                return Err(Error::Dimension {
                    expected: x.len(),
                    got: g.len(),
                });
            }
            for i in 0..x.len() {
                let (x, g, eg, ed) = (&mut x[i], g[i], &mut eg[i], &mut ed[i]);
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let dx = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g * lr;
                *ed = rho * *ed + (1.0 - rho) * dx * dx;
                *x += dx;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub keep_prob: f64,
    pub seed: u64,
    pub weights: TaskWeights,
    pub adadelta: AdaDeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            clip: 0.1,
            clip_mode: ClipMode::Element,
            keep_prob: 0.75,
            seed: 0,
            weights: TaskWeights::MULTI_TASK,
            adadelta: AdaDeltaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!(
                "keep_prob must be in (0, 1], got {}",
                self.keep_prob
            )));
        }
        let a = &self.adadelta;
        if !(a.rho > 0.0 && a.rho < 1.0 && a.eps > 0.0 && a.lr > 0.0) {
            return Err(Error::Config("invalid AdaDelta parameters".into()));
        }
        if self.weights.nyhac < 0.0 || self.weights.bmi < 0.0 {
            return Err(Error::Config("task weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean training loss per epoch, measured before that epoch's update.
    pub history: Vec<LossBreakdown>,
}

/// Full-batch training: each epoch draws fresh dropout masks, computes the
/// mean-loss gradient, clips it and applies one AdaDelta step.
pub fn train(examples: &[Example], config: &TrainConfig, mut params: NetworkParams, rng: &mut Rng) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Eval("no training examples".into()));
    }
    let shape = params.shape;
    let tasks = Task::ALL.map(|t| config.weights.active(t));
    let mut state = AdaDeltaState::new(&params, config.adadelta);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mask;
        let mode = if config.keep_prob < 1.0 {
            mask = DropoutMask::sample(&shape, examples.len(), config.keep_prob, rng);
            Mode::Train(&mask)
        } else {
            Mode::Infer
        };
        let fwd = forward_batch(&params, examples, mode, tasks)?;
        let loss = fwd.loss(examples, config.weights);
        if !loss.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let mut grads = backward_batch(&params, &fwd, examples, config.weights);
        match config.clip_mode {
            ClipMode::Element => {
                for t in grads.tensors_mut() {
                    clip(t, config.clip);
                }
            }
            ClipMode::GlobalNorm => clip_global_norm(&mut grads.tensors_mut(), config.clip),
        }
        state.step(&mut params, &grads).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { epoch },
            other => other,
        })?;
        if epoch % 100 == 0 {
            debug!("epoch {epoch}: loss {:.6}", loss.total);
        }
        history.push(loss);
    }
    Ok(TrainOutcome { params, history })
}

/// Writes `epoch,loss,vta_loss,nyhac_loss,bmi_loss`.
pub fn write_loss_csv<W: Write>(out: W, history: &[LossBreakdown]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Eval(format!("writing loss CSV: {e}"));
    w.write_record(["epoch", "loss", "vta_loss", "nyhac_loss", "bmi_loss"])
        .map_err(to_err)?;
    for (epoch, l) in history.iter().enumerate() {
        w.write_record([
            epoch.to_string(),
            format!("{:.9}", l.total),
            format!("{:.9}", l.vta),
            format!("{:.9}", l.nyhac),
            format!("{:.9}", l.bmi),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Eval(format!("writing loss CSV: {e}")))?;
    Ok(())
}
