//! Leave-one-room-out training and evaluation of the detector.
//!
//! Features are cached once for the whole manifest; each fold then trains
//! on the cached examples of its training rooms only and evaluates on the
//! held-out room, whose clips were subtracted with that room's own profile.

use serde::{Deserialize, Serialize};

use super::folds::{plan_folds, AccessAudit, FoldPlan};
use super::metrics::{MetricsTable, Outcome};
use crate::detector::dataset::{build_cache, load_profiles, AugmentationPool, CacheConfig, FeatureCache};
use crate::detector::train::predict_cached;
use crate::detector::{CachedFeatures, DetectorModel, EpochLog, Example, TrainConfig, Trainer};
use crate::error::Result;
use crate::geometry::pixel_to_degrees;
use crate::manifest::Manifest;
use crate::spectro::Stft;

pub const DETECTOR_METHOD: &str = "detector";

/// Manifest plus the features cached for every labeled clip.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub manifest: Manifest,
    pub folds: Vec<FoldPlan>,
    pub cache: FeatureCache,
}

/// Checks the fold preconditions, then caches features for every sample.
pub fn prepare(manifest: &Manifest, config: &TrainConfig) -> Result<PreparedData> {
    config.validate()?;
    let folds = plan_folds(manifest)?;
    Ok(PreparedData {
        manifest: manifest.clone(),
        folds,
        cache: cache_manifest(manifest, config)?,
    })
}

/// Loads profiles and the augmentation pool, then caches every sample.
pub fn cache_manifest(manifest: &Manifest, config: &TrainConfig) -> Result<FeatureCache> {
    manifest.validate()?;
    let stft = Stft::new();
    let profiles = load_profiles(manifest, &stft)?;
    let pool = if config.augmentation && config.aug_variants > 0 && !manifest.augmentation.is_empty() {
        Some(AugmentationPool::load(manifest, &stft)?)
    } else {
        None
    };
    build_cache(
        manifest,
        &profiles,
        pool.as_ref(),
        &CacheConfig {
            seed: config.aug_seed,
            aug_weight: config.aug_weight,
            variants: config.aug_variants,
            distance_threshold_m: config.distance_threshold_m,
        },
    )
}

/// Trains one detector on every sample of the manifest.
pub fn train_full(manifest: &Manifest, config: &TrainConfig) -> Result<(DetectorModel, Vec<EpochLog>)> {
    let cache = cache_manifest(manifest, config)?;
    let all: Vec<usize> = (0..cache.samples.len()).collect();
    Trainer::new(config.clone())?.train(&cache.examples(&all, &[]), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub plan: FoldPlan,
    pub table: MetricsTable,
    pub audit: AccessAudit,
    pub w_backsub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub aggregate: MetricsTable,
}

impl PreparedData {
    /// Training examples for a fold, recording every room they came from.
    pub fn training_examples(&self, fold: &FoldPlan, audit: &mut AccessAudit) -> Vec<Example> {
        let indices: Vec<usize> = (0..self.manifest.samples.len())
            .filter(|&i| fold.trains_on(&self.manifest.samples[i].room_id))
            .collect();
        let examples = self.cache.examples(&indices, &[fold.held_out_room.as_str()]);
        for (&i, e) in indices.iter().zip(&examples) {
            audit.record_sample(&self.manifest.samples[i].room_id);
            for f in &e.variants {
                let v = self.cache.samples[i]
                    .variants
                    .iter()
                    .find(|v| std::sync::Arc::ptr_eq(&v.features, f))
                    .expect("variant comes from the cache");
                audit.record_pool(&v.pool_room);
            }
        }
        examples
    }

    pub fn test_indices(&self, fold: &FoldPlan) -> Vec<usize> {
        (0..self.manifest.samples.len())
            .filter(|&i| self.manifest.samples[i].room_id == fold.held_out_room)
            .collect()
    }
}

/// Trains and evaluates every fold with `config.seed`.
pub fn run_loocv(data: &PreparedData, config: &TrainConfig) -> Result<LoocvReport> {
    let trainer = Trainer::new(config.clone())?;
    let mut folds = Vec::with_capacity(data.folds.len());
    for plan in &data.folds {
        let mut audit = AccessAudit::default();
        let train = data.training_examples(plan, &mut audit);
        let (model, _) = trainer.train(&train, None)?;
        let test = data.test_indices(plan);
        let feats: Vec<&CachedFeatures> = test.iter().map(|&i| data.cache.samples[i].natural.as_ref()).collect();
        let preds = predict_cached(&model, &feats)?;
        let outcomes: Vec<Outcome> = test
            .iter()
            .zip(&preds)
            .map(|(&i, p)| {
                let s = &data.manifest.samples[i];
                let t = &data.cache.samples[i].target;
                Outcome {
                    action: s.action,
                    condition: s.robot_condition,
                    true_deg: s.azimuth_x.map(pixel_to_degrees),
                    pred_deg: s.presence.then(|| p.angle_deg()),
                    true_near: t.near,
                    pred_near: t.near.map(|_| p.near()),
                    true_presence: s.presence,
                    pred_presence: Some(p.present()),
                }
            })
            .collect();
        folds.push(FoldResult {
            plan: plan.clone(),
            table: MetricsTable::from_outcomes(DETECTOR_METHOD, &outcomes),
            audit,
            w_backsub: model.w_backsub,
        });
    }
    let tables: Vec<MetricsTable> = folds.iter().map(|f| f.table.clone()).collect();
    Ok(LoocvReport {
        seed: config.seed,
        folds,
        aggregate: MetricsTable::mean_over(DETECTOR_METHOD, &tables),
    })
}

/// Prepares the data and runs one LOOCV pass.
pub fn loocv(manifest: &Manifest, config: &TrainConfig) -> Result<LoocvReport> {
    run_loocv(&prepare(manifest, config)?, config)
}

/// One LOOCV pass per seed plus the cell-wise median of their aggregates.
pub fn loocv_seeds(data: &PreparedData, config: &TrainConfig, seeds: &[u64]) -> Result<(Vec<LoocvReport>, MetricsTable)> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        runs.push(run_loocv(data, &cfg)?);
    }
    let tables: Vec<MetricsTable> = runs.iter().map(|r| r.aggregate.clone()).collect();
    let median = MetricsTable::median_over(DETECTOR_METHOD, &tables);
    Ok((runs, median))
}
