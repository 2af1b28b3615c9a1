use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{forward, forward_many, init_mlp, loss_and_grad, ForwardMode, MlpParams};
use super::optim::{cosine_lr, AdamW};
use crate::descriptors::ShiftDescriptor;
use crate::error::{Error, Result};
use crate::metaset::MetaInstance;
use crate::seed::{self, tag};

pub const NORMALIZER_FLOOR: f64 = 1e-8;
pub const MIN_TRAINING_INSTANCES: usize = 10;

/// Per-feature standardization fitted on training features, plus the affine
/// map from network output back to accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("normalizer rows"))?;
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| (s / n).sqrt().max(NORMALIZER_FLOOR))
            .collect();
        Ok(Normalizer {
            feature_mean: mean,
            feature_std: std,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    pub fn with_targets(mut self, ys: &[f64]) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::Empty("normalizer targets"));
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        self.target_mean = mean;
        self.target_std = var.sqrt().max(NORMALIZER_FLOOR);
        Ok(self)
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn unscale_output(&self, out: f64) -> f64 {
        self.target_mean + self.target_std * out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub eta_min: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub dropout: f64,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr0: 1e-4,
            eta_min: 0.0,
            betas: (0.9, 0.999),
            weight_decay: 1e-3,
            max_epochs: 20,
            dropout: 0.2,
            patience: 3,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if !(self.lr0 > 0.0) || !(self.eta_min >= 0.0) || self.eta_min > self.lr0 {
            return bad("need lr0 > 0 and 0 <= eta_min <= lr0");
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.dropout) {
            return bad("need weight_decay >= 0 and dropout in [0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return bad("val_fraction must lie in (0, 0.5)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_mae: f64,
    /// Inference-mode MSE on the training split after each epoch.
    pub train_loss_curve: Vec<f64>,
    pub val_mae_curve: Vec<f64>,
    pub stopped_early: bool,
    pub degenerate_targets: bool,
    pub n_train: usize,
    pub n_val: usize,
}

/// Patience-based early stopping on a monitored error.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, error: f64) -> Verdict {
        if error < self.best {
            self.best = error;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            return Verdict::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

/// A trained regressor together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluator {
    pub params: MlpParams,
    pub normalizer: Normalizer,
    pub config_digest: String,
    pub report: Option<TrainReport>,
    pub meta_init: bool,
}

impl Evaluator {
    pub fn raw_output(&self, delta: &ShiftDescriptor) -> Result<f64> {
        self.check_digest(delta)?;
        let x = self.normalizer.apply(&delta.features());
        let out = forward(&self.params, &x, ForwardMode::Inference)?;
        Ok(self.normalizer.unscale_output(out))
    }

    pub fn check_digest(&self, delta: &ShiftDescriptor) -> Result<()> {
        if delta.config_digest != self.config_digest {
            return Err(Error::ConfigMismatch {
                expected: self.config_digest.clone(),
                found: delta.config_digest.clone(),
            });
        }
        Ok(())
    }
}

/// Estimated accuracy for a shift descriptor, clipped to `[0, 1]`.
pub fn predict(model: &Evaluator, delta: &ShiftDescriptor) -> Result<f64> {
    Ok(model.raw_output(delta)?.clamp(0.0, 1.0))
}

pub(crate) fn uniform_digest(instances: &[MetaInstance]) -> Result<String> {
    let first = instances
        .first()
        .ok_or(Error::Empty("meta-set"))?
        .delta
        .config_digest
        .clone();
    if let Some(other) = instances.iter().find(|i| i.delta.config_digest != first) {
        return Err(Error::ConfigMismatch {
            expected: first,
            found: other.delta.config_digest.clone(),
        });
    }
    Ok(first)
}

pub(crate) fn check_labels(instances: &[MetaInstance]) -> Result<()> {
    if let Some(bad) = instances.iter().find(|i| !(0.0..=1.0).contains(&i.accuracy)) {
        return Err(Error::InvalidArgument(format!(
            "accuracy {} of {} outside [0, 1]",
            bad.accuracy, bad.sample_set_id
        )));
    }
    Ok(())
}

/// Errors on the accuracy scale; `ys` are raw labels.
fn mse_and_mae(params: &MlpParams, norm: &Normalizer, xs: &[Vec<f64>], ys: &[f64]) -> Result<(f64, f64)> {
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let out: Vec<f64> = forward_many(params, &refs)?
        .into_iter()
        .map(|o| norm.unscale_output(o))
        .collect();
    let n = ys.len() as f64;
    let mse = out.iter().zip(ys).map(|(f, y)| (f - y) * (f - y)).sum::<f64>() / n;
    let mae = out
        .iter()
        .zip(ys)
        .map(|(f, y)| (f.clamp(0.0, 1.0) - y).abs())
        .sum::<f64>()
        / n;
    Ok((mse, mae))
}

/// Mini-batch AdamW training with a cosine schedule and early stopping on
/// validation MAE. Returns the parameters of the best validation epoch.
pub fn train(meta_set: &[MetaInstance], cfg: &TrainConfig) -> Result<Evaluator> {
    cfg.validate()?;
    if meta_set.len() < MIN_TRAINING_INSTANCES {
        return Err(Error::InsufficientData(format!(
            "{} meta-instances, need at least {MIN_TRAINING_INSTANCES}",
            meta_set.len()
        )));
    }
    check_labels(meta_set)?;
    let digest = uniform_digest(meta_set)?;

    let n = meta_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::derived_rng(cfg.seed, tag::SPLIT));
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let raw: Vec<[f64; 5]> = meta_set.iter().map(|m| m.delta.features()).collect();
    let train_raw: Vec<&[f64]> = train_idx.iter().map(|&i| raw[i].as_slice()).collect();
    let ys: Vec<f64> = meta_set.iter().map(|m| m.accuracy).collect();
    let train_ys: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
    let normalizer = Normalizer::fit(&train_raw)?.with_targets(&train_ys)?;
    let xs: Vec<Vec<f64>> = raw.iter().map(|r| normalizer.apply(r)).collect();

    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
    let val_x: Vec<Vec<f64>> = val_idx.iter().map(|&i| xs[i].clone()).collect();
    let val_y: Vec<f64> = val_idx.iter().map(|&i| ys[i]).collect();
    let degenerate_targets = ys.iter().all(|&y| y == ys[0]);

    let mut params = init_mlp(xs[0].len(), seed::derive(cfg.seed, tag::INIT))?;
    let mut opt = AdamW::new(params.len(), cfg.betas, cfg.weight_decay);
    let steps_per_epoch = train_x.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.max_epochs * steps_per_epoch;
    let dropout_seed = seed::derive(cfg.seed, tag::DROPOUT);
    let mut shuffle_rng = seed::derived_rng(cfg.seed, tag::SHUFFLE);

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut batch_order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 0..cfg.max_epochs {
        batch_order.shuffle(&mut shuffle_rng);
        for chunk in batch_order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| (train_x[i].as_slice(), normalizer.scale_target(train_y[i])))
                .collect();
            let mode = ForwardMode::Train {
                dropout: cfg.dropout,
                seed: seed::derive(dropout_seed, step as u64),
            };
            let (_, grads) = loss_and_grad(&params, &batch, mode)?;
            let lr = cosine_lr(step, total_steps, cfg.lr0, cfg.eta_min);
            opt.step(params.as_mut_slice(), grads.as_slice(), lr)?;
            step += 1;
        }
        let (train_mse, _) = mse_and_mae(&params, &normalizer, &train_x, &train_y)?;
        let (_, val_mae) = mse_and_mae(&params, &normalizer, &val_x, &val_y)?;
        train_curve.push(train_mse);
        val_curve.push(val_mae);
        match stopper.observe(epoch, val_mae) {
            Verdict::Improved => best_params = params.clone(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let report = TrainReport {
        epochs_run: train_curve.len(),
        best_val_mae: stopper.best(),
        train_loss_curve: train_curve,
        val_mae_curve: val_curve,
        stopped_early,
        degenerate_targets,
        n_train: train_x.len(),
        n_val: val_x.len(),
    };
    Ok(Evaluator {
        params: best_params,
        normalizer,
        config_digest: digest,
        report: Some(report),
        meta_init: false,
    })
}
