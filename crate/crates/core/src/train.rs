//! Training configuration, Adam, the learning-rate schedule, early stopping
//! and the training loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataio::Sample;
use crate::error::{PflError, Result};
use crate::infer_eval::{auroc, run_inference};
use crate::losses::LossBreakdown;
use crate::model::{EnsembleMode, ModelConfig, PflModel, Regularizer};
use crate::numcore::{ParamSet, Rng, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_frac: f64,
    pub patience: usize,
    #[serde(rename = "B")]
    pub banks: usize,
    #[serde(rename = "K")]
    pub flow_len: usize,
    #[serde(rename = "P")]
    pub context_len: usize,
    #[serde(rename = "Q")]
    pub state_len: usize,
    #[serde(rename = "R_train")]
    pub train_samples: usize,
    #[serde(rename = "R_infer")]
    pub infer_samples: usize,
    /// Encoder layer indices the records were extracted from.
    pub layers: Vec<u32>,
    pub logit_scale: f64,
    pub seed: u64,
    /// `flow` or `gaussian`.
    pub regularizer: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            epochs: 20,
            warmup_frac: 0.10,
            patience: 3,
            banks: 3,
            flow_len: 10,
            context_len: 5,
            state_len: 5,
            train_samples: 1,
            infer_samples: 10,
            layers: vec![6, 12, 18, 24],
            logit_scale: 100.0,
            seed: 0,
            regularizer: "flow".into(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| PflError::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("B", self.banks),
            ("P", self.context_len),
            ("Q", self.state_len),
            ("R_train", self.train_samples),
            ("R_infer", self.infer_samples),
            ("layers", self.layers.len()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PflError::config(format!("{name} must be positive")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(PflError::config("lr must be positive"));
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(PflError::config("logit_scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(PflError::config("warmup_frac must lie in [0, 1)"));
        }
        if self.train_samples != 1 {
            return Err(PflError::config(
                "training uses a single sample per distribution (R_train = 1)",
            ));
        }
        self.regularizer.parse::<Regularizer>()?;
        Ok(())
    }

    /// Model shape for records with joint width `dim` and raw width `raw_dim`.
    pub fn model_config(&self, dim: usize, raw_dim: usize) -> Result<ModelConfig> {
        Ok(ModelConfig {
            dim,
            raw_dim,
            layers: self.layers.len(),
            banks: self.banks,
            context_len: self.context_len,
            state_len: self.state_len,
            flow_len: self.flow_len,
            logit_scale: self.logit_scale,
            regularizer: self.regularizer.parse()?,
        })
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn moments(&self, index: usize) -> (&Tensor, &Tensor) {
        (&self.m[index], &self.v[index])
    }

    /// Applies one update from the accumulated gradients. Nothing changes
    /// when any trainable gradient is non-finite.
    pub fn update(&mut self, params: &mut ParamSet, lr: f64) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.trainable && !p.grad.is_finite()) {
            return Err(PflError::numeric(format!(
                "non-finite gradient for {}",
                p.name
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((x, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m)
                .zip(v)
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Number of warm-up steps, `ceil(frac * total)`.
pub fn warmup_steps(total_steps: usize, warmup_frac: f64) -> usize {
    (warmup_frac * total_steps as f64).ceil() as usize
}

/// Linear warm-up from 0 to `lr`, then half-cosine decay reaching 0 at the
/// last step.
pub fn lr_at(step: usize, total_steps: usize, lr: f64, warmup_frac: f64) -> f64 {
    let w = warmup_steps(total_steps, warmup_frac);
    if step < w {
        return lr * step as f64 / w as f64;
    }
    let span = total_steps.saturating_sub(1 + w).max(1);
    let progress = ((step - w) as f64 / span as f64).min(1.0);
    lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<f64>,
    pub stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, metric: f64) -> StopDecision {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Mean of pooled image AUROC and pooled pixel AUROC.
pub fn validation_metric(
    model: &PflModel,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<f64> {
    let features: Vec<_> = samples.iter().map(|s| s.features.clone()).collect();
    let preds = run_inference(
        model,
        &features,
        config.infer_samples,
        EnsembleMode::Image,
        config.seed,
    )?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score.total).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let pix_scores: Vec<f64> = preds.iter().flat_map(|p| p.map.iter().copied()).collect();
    let pix_labels: Vec<bool> = samples
        .iter()
        .flat_map(|s| s.mask.values.iter().copied())
        .collect();
    Ok(0.5 * (auroc(&scores, &labels)? + auroc(&pix_scores, &pix_labels)?))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub best_params: ParamSet,
    pub best_metric: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps: usize,
    pub losses: Vec<LossBreakdown>,
    pub validation: Vec<f64>,
}

pub const TRAIN_LOG_HEADER: &str = "step\tl_ort\tl_flow_reg\tl_cls\tl_focal\tl_dice\ttotal";

fn log_line(step: usize, b: &LossBreakdown) -> String {
    format!(
        "{step}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
        b.l_ort, b.l_flow_reg, b.l_cls, b.l_focal, b.l_dice, b.total
    )
}

/// Accumulates the mean loss gradient of `batch` into `model.params` and
/// returns the mean breakdown.
pub fn batch_gradient(
    model: &mut PflModel,
    batch: &[&Sample],
    bank: usize,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    model.params.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut mean = LossBreakdown::default();
    for sample in batch {
        let mut tape = Tape::new();
        let bind = tape.bind(&model.params);
        let mask = Tensor::new(
            vec![sample.mask.values.len(), 1],
            sample.mask.values.iter().map(|&m| m as u8 as f64).collect(),
        )?;
        let (loss, parts) = model.training_loss(
            &mut tape,
            &bind,
            &sample.features,
            sample.label,
            &mask,
            bank,
            rng,
        )?;
        if !parts.is_finite() {
            return Err(PflError::numeric(format!(
                "non-finite loss on image {}: {parts:?}",
                sample.id
            )));
        }
        let grads = tape.backward(loss)?;
        grads.accumulate(&bind, &mut model.params, scale)?;
        mean.add_scaled(&parts, scale);
    }
    Ok(mean)
}

/// Runs the full schedule. Validation happens after every epoch when `val`
/// is nonempty; without validation data the final parameters are kept.
pub fn train_loop(
    model: &mut PflModel,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(PflError::config("training split is empty"));
    }
    let io = |e: std::io::Error| PflError::io("train log", e);
    writeln!(log, "{TRAIN_LOG_HEADER}").map_err(io)?;

    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = Rng::stream(config.seed, 1);
    let mut adam = Adam::new(&model.params);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut outcome = TrainOutcome {
        best_params: model.params.clone(),
        best_metric: None,
        best_epoch: 0,
        epochs_run: 0,
        steps: 0,
        losses: Vec::with_capacity(total_steps),
        validation: Vec::new(),
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let bank = rng.below(config.banks);
            let parts = batch_gradient(model, &batch, bank, &mut rng).map_err(|e| match e {
                PflError::Numeric(m) => PflError::numeric(format!("step {step}: {m}")),
                other => other,
            })?;
            adam.update(
                &mut model.params,
                lr_at(step, total_steps, config.lr, config.warmup_frac),
            )
            .map_err(|e| PflError::numeric(format!("step {step}: {e}")))?;
            writeln!(log, "{}", log_line(step, &parts)).map_err(io)?;
            outcome.losses.push(parts);
            step += 1;
        }
        outcome.epochs_run = epoch + 1;
        outcome.steps = step;
        if val.is_empty() {
            outcome.best_params = model.params.clone();
            outcome.best_epoch = epoch;
            continue;
        }
        let metric = validation_metric(model, val, config)?;
        outcome.validation.push(metric);
        match stopper.observe(metric) {
            StopDecision::Improved => {
                outcome.best_params = model.params.clone();
                outcome.best_metric = Some(metric);
                outcome.best_epoch = epoch;
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    log.flush().map_err(io)?;
    Ok(outcome)
}
