//! Mini-batch Adam training with chronological validation and early stopping.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::model::Model;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_MAX_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    /// Share of the training rows, taken from their chronological tail, held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Mse,
            learning_rate: DEFAULT_LEARNING_RATE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            early_stop_patience: DEFAULT_PATIENCE,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if matches!(self.clip_norm, Some(c) if c <= 0.0) {
            return bad("clip_norm must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were kept; 0 when no epoch ran.
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            writeln!(s, "{},{},{}", i + 1, t, v).expect("string write");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
    }
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let shapes: Vec<_> = model.params().iter().map(|p| p.value.dim()).collect();
        Self {
            m: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            v: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Model, cfg: &TrainConfig) {
        self.step += 1;
        let scale = match cfg.clip_norm {
            Some(limit) => {
                let norm = model
                    .params()
                    .iter()
                    .filter(|p| p.trainable)
                    .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > limit {
                    limit / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for (i, p) in model.params_mut().into_iter().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|w, &g, m, v| {
                let g = g * scale;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let update = cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
                *w = (*w - update) as f32 as f64;
            });
        }
    }
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

/// Number of validation rows for `n` training rows.
pub fn validation_len(n: usize, fraction: f64) -> usize {
    let k = (n as f64 * fraction).floor() as usize;
    if fraction > 0.0 && k == 0 && n >= 2 {
        1
    } else {
        k
    }
}

/// Trains in place. Targets are min-max scaled on the training rows; the
/// scaling is stored in the model and undone by [`predict`].
pub fn train(model: &mut Model, x: &Array3<f64>, y: &[f64], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let n = x.dim().0;
    if n == 0 || y.is_empty() {
        return Err(NnError::EmptyData);
    }
    if y.len() != n {
        return Err(NnError::Shape(format!("{n} samples but {} targets", y.len())));
    }
    model.check_input(x)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteLoss { epoch: 0 });
    }
    let start = Instant::now();

    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    model.set_target_range(lo, hi);
    let ys: Vec<f64> = y.iter().map(|&v| model.scale_target(v)).collect();

    let n_val = validation_len(n, cfg.validation_fraction);
    let n_fit = n - n_val;
    let val_x = x.slice(ndarray::s![n_fit.., .., ..]).to_owned();
    let val_y = &ys[n_fit..];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..n_fit).collect();
    let mut report = TrainReport { train_loss: vec![], val_loss: vec![], stopped_epoch: 0, best_epoch: 0, wall_seconds: 0.0 };
    let mut best: Option<(f64, Vec<Array2<f64>>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            for p in model.params_mut() {
                p.zero_grad();
            }
            let out = model.net.forward(&bx, &mut rng);
            let pred: Vec<f64> = out.iter().copied().collect();
            let loss = mse(&pred, &by);
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch });
            }
            total += loss * batch.len() as f64;
            let scale = 2.0 / batch.len() as f64;
            let grad = Array3::from_shape_fn(out.dim(), |(b, _, _)| scale * (pred[b] - by[b]));
            model.net.backward(&grad);
            adam.update(model, cfg);
        }
        let train_loss = total / n_fit as f64;
        let val_loss = if n_val > 0 { mse(&model.infer_scaled(&val_x), val_y) } else { train_loss };
        if !val_loss.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.stopped_epoch = epoch;
        log::debug!("{} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}", model.kind());

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params().iter().map(|p| p.value.clone()).collect()));
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    if let Some((_, values)) = best {
        for (p, v) in model.params_mut().into_iter().zip(values) {
            p.value = v;
        }
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Forecasts on the original target scale.
pub fn predict(model: &Model, x: &Array3<f64>) -> Result<Vec<f64>> {
    model.check_input(x)?;
    Ok(model.infer_scaled(x).into_iter().map(|v| model.unscale_target(v)).collect())
}
