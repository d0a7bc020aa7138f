//! Mini-batch Adam training over cached features.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{CachedFeatures, ENERGY_LEN, FEATURE_LEN};
use super::model::{DetectorModel, LossBreakdown, LossWeights, Predictions, Target, INITIAL_BACKSUB};
use crate::error::{Error, Result};
use crate::geometry::{circular_pixel_error, PANORAMA_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub angle_loss_weight: f64,
    pub distance_loss_weight: f64,
    pub presence_loss_weight: f64,
    pub distance_threshold_m: f64,
    /// Empty-room augmentation weight.
    pub aug_weight: f64,
    /// Augmentation variants prepared per sample.
    pub aug_variants: usize,
    /// Chance that a sample is replaced by one of its variants in an epoch.
    pub aug_prob: f64,
    /// Seed for drawing augmentation variants, kept apart from `seed`.
    pub aug_seed: u64,
    pub augmentation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-3,
            angle_loss_weight: 1.0 / PANORAMA_WIDTH,
            distance_loss_weight: 1.0,
            presence_loss_weight: 1.0,
            distance_threshold_m: 1.7,
            aug_weight: crate::augment::DEFAULT_WEIGHT,
            aug_variants: 2,
            aug_prob: 0.5,
            aug_seed: 0,
            augmentation: true,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            angle: self.angle_loss_weight,
            distance: self.distance_loss_weight,
            presence: self.presence_loss_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.aug_weight) || !(0.0..=1.0).contains(&self.aug_prob) {
            return bad("aug_weight and aug_prob must lie in [0, 1]");
        }
        if self.distance_threshold_m <= 0.0 {
            return bad("distance_threshold_m must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One training or evaluation sample with its cached features.
#[derive(Debug, Clone)]
pub struct Example {
    pub natural: Arc<CachedFeatures>,
    /// Features of the same clip mixed with foreign empty rooms.
    pub variants: Vec<Arc<CachedFeatures>>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub w_backsub: f64,
    pub validation: Option<ValidationMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationMetrics {
    pub loss: LossBreakdown,
    pub angle_mae_deg: f64,
    pub presence_accuracy: f64,
}

/// Adam with coupled L2 decay. The subtraction weight is exempt from decay
/// and is clamped to `[0, 1]` after every step.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, ((p, &g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            let g = if i == 0 { g } else { g + self.weight_decay * *p };
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        params[0] = params[0].clamp(0.0, 1.0);
    }
}

fn keyed_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng
}

/// Feature rows and slopes for a batch, at subtraction weight `w`.
pub fn assemble(items: &[&CachedFeatures], w: f64) -> (Array2<f64>, Array2<f64>) {
    let mut x = Array2::zeros((items.len(), FEATURE_LEN));
    let mut s = Array2::zeros((items.len(), ENERGY_LEN));
    for (i, f) in items.iter().enumerate() {
        let xr = x.row_mut(i).into_slice().expect("contiguous");
        let sr = s.row_mut(i).into_slice().expect("contiguous");
        f.fill(w, xr, sr);
    }
    (x, s)
}

/// Per-feature mean and standard deviation of the natural features.
pub fn standardization(examples: &[Example], w: f64) -> (Array1<f64>, Array1<f64>) {
    let n = examples.len() as f64;
    let mut mean = Array1::<f64>::zeros(FEATURE_LEN);
    let mut sq = Array1::<f64>::zeros(FEATURE_LEN);
    let mut row = vec![0.0; FEATURE_LEN];
    let mut slope = vec![0.0; ENERGY_LEN];
    for e in examples {
        e.natural.fill(w, &mut row, &mut slope);
        for ((m, q), &v) in mean.iter_mut().zip(sq.iter_mut()).zip(&row) {
            *m += v;
            *q += v * v;
        }
    }
    mean /= n;
    let std = Array1::from_shape_fn(FEATURE_LEN, |j| (sq[j] / n - mean[j] * mean[j]).max(0.0).sqrt());
    (mean, std)
}

pub struct Trainer {
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    fn check_data(examples: &[Example]) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !examples.iter().any(|e| !e.target.presence) {
            return Err(Error::NoEmptySamples);
        }
        for e in examples {
            e.target.validate(PANORAMA_WIDTH)?;
        }
        Ok(())
    }

    /// Fresh model with standardization fitted to `examples`.
    pub fn init_model(&self, examples: &[Example]) -> Result<DetectorModel> {
        Self::check_data(examples)?;
        let (mean, std) = standardization(examples, INITIAL_BACKSUB);
        let mut model = DetectorModel::new(self.config.seed, mean, std)?;
        model.distance_threshold = self.config.distance_threshold_m;
        Ok(model)
    }

    pub fn train(&self, examples: &[Example], validation: Option<&[Example]>) -> Result<(DetectorModel, Vec<EpochLog>)> {
        let mut model = self.init_model(examples)?;
        let log = self.train_from(&mut model, examples, validation)?;
        Ok((model, log))
    }

    /// Runs the configured epochs starting from `model`.
    pub fn train_from(
        &self,
        model: &mut DetectorModel,
        examples: &[Example],
        validation: Option<&[Example]>,
    ) -> Result<Vec<EpochLog>> {
        Self::check_data(examples)?;
        let cfg = &self.config;
        let weights = cfg.loss_weights();
        let mut adam = Adam::new(model.n_params(), cfg);
        let mut params = model.params();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut logs = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.sort_unstable();
            order.shuffle(&mut keyed_rng(cfg.seed, 1, epoch as u64));
            let chosen: Vec<&CachedFeatures> = order
                .iter()
                .map(|&i| {
                    let e = &examples[i];
                    if cfg.augmentation && !e.variants.is_empty() {
                        let mut rng = keyed_rng(cfg.seed, 2 + epoch as u64, i as u64);
                        if rng.gen::<f64>() < cfg.aug_prob {
                            return e.variants[rng.gen_range(0..e.variants.len())].as_ref();
                        }
                    }
                    e.natural.as_ref()
                })
                .collect();
            let mut sum = LossBreakdown::default();
            for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
                let start = batch_idx * cfg.batch_size;
                let feats = &chosen[start..start + batch.len()];
                let targets: Vec<Target> = batch.iter().map(|&i| examples[i].target).collect();
                let (x, slope) = assemble(feats, model.w_backsub);
                let cache = model.forward_batch(x.view())?;
                let (loss, d_out) = model.loss(&cache, &targets, weights)?;
                let grads = model.backward(&cache, &d_out, slope.view());
                let k = batch.len() as f64;
                sum.total += loss.total * k;
                sum.angle += loss.angle * k;
                sum.distance += loss.distance * k;
                sum.presence += loss.presence * k;
                adam.update(&mut params, &grads.flat());
                model.set_params(&params)?;
            }
            let n = examples.len() as f64;
            let train = LossBreakdown {
                total: sum.total / n,
                angle: sum.angle / n,
                distance: sum.distance / n,
                presence: sum.presence / n,
            };
            let validation = match validation {
                Some(v) if !v.is_empty() => Some(validate(model, v, weights)?),
                _ => None,
            };
            logs.push(EpochLog {
                epoch,
                train,
                w_backsub: model.w_backsub,
                validation,
            });
        }
        Ok(logs)
    }
}

/// Predictions for cached examples at the model's current subtraction weight.
pub fn predict_cached(model: &DetectorModel, features: &[&CachedFeatures]) -> Result<Vec<Predictions>> {
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(256) {
        let (x, _) = assemble(chunk, model.w_backsub);
        let cache = model.forward_batch(x.view())?;
        out.extend(model.predictions(&cache));
    }
    Ok(out)
}

pub fn validate(model: &DetectorModel, examples: &[Example], weights: LossWeights) -> Result<ValidationMetrics> {
    let feats: Vec<&CachedFeatures> = examples.iter().map(|e| e.natural.as_ref()).collect();
    let targets: Vec<Target> = examples.iter().map(|e| e.target).collect();
    let (x, _) = assemble(&feats, model.w_backsub);
    let cache = model.forward_batch(x.view())?;
    let (loss, _) = model.loss(&cache, &targets, weights)?;
    let preds = model.predictions(&cache);
    let mut err = 0.0;
    let mut n_present = 0usize;
    let mut correct = 0usize;
    for (p, t) in preds.iter().zip(&targets) {
        if p.present() == t.presence {
            correct += 1;
        }
        if let Some(x) = t.pixel {
            err += circular_pixel_error(p.pixel, x, model.width) * 360.0 / model.width;
            n_present += 1;
        }
    }
    Ok(ValidationMetrics {
        loss,
        angle_mae_deg: if n_present > 0 { err / n_present as f64 } else { f64::NAN },
        presence_accuracy: correct as f64 / preds.len() as f64,
    })
}
