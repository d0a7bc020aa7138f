//! Turning a manifest into cached training examples.
//!
//! Recordings are loaded one at a time so only the cached features stay in
//! memory. Augmentation variants are keyed by `(seed, sample index, variant)`
//! and remember which pool room they borrowed from, so a fold can drop
//! variants built from its held-out room.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{CachedFeatures, FeatureExtractor};
use super::model::Target;
use super::train::Example;
use crate::audio::{read_recording, MultiChannelClip, ReadOptions, CLIP_SECONDS};
use crate::augment::{draw_pool_entry, Augmentation, AugmentationWeight};
use crate::error::{Error, Result};
use crate::manifest::{LabeledSample, Manifest, RobotCondition};
use crate::spectro::{empty_profile, EmptyRoomProfile, Stft, CLIP_SAMPLES};

pub type ProfileKey = (String, RobotCondition);

/// Empty-room profiles for every `(room, condition)` listed in the manifest.
pub fn load_profiles(manifest: &Manifest, stft: &Stft) -> Result<BTreeMap<ProfileKey, EmptyRoomProfile>> {
    let mut out = BTreeMap::new();
    for p in &manifest.profiles {
        let audio = read_recording(&p.path, ReadOptions::channels(4))?;
        let profile = empty_profile(stft, &audio, &p.room_id, p.robot_condition)?;
        out.insert((p.room_id.clone(), p.robot_condition), profile);
    }
    Ok(out)
}

/// Foreign empty-room recordings used for augmentation.
#[derive(Debug, Clone)]
pub struct AugmentationPool {
    pub entries: Vec<PoolEntry>,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub room_id: String,
    pub audio: MultiChannelClip,
    pub profile: EmptyRoomProfile,
}

impl AugmentationPool {
    pub fn load(manifest: &Manifest, stft: &Stft) -> Result<Self> {
        let mut entries = Vec::new();
        for a in &manifest.augmentation {
            let audio = read_recording(&a.path, ReadOptions::channels(4))?;
            let profile = empty_profile(stft, &audio, &a.room_id, RobotCondition::Static)?;
            entries.push(PoolEntry {
                room_id: a.room_id.clone(),
                audio,
                profile,
            });
        }
        Ok(Self { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of entries whose room is not in `excluded`.
    pub fn eligible(&self, excluded: &[&str]) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| !excluded.contains(&self.entries[i].room_id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheConfig {
    pub seed: u64,
    pub aug_weight: f64,
    pub variants: usize,
    pub distance_threshold_m: f64,
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub pool_room: String,
    pub features: Arc<CachedFeatures>,
}

#[derive(Debug, Clone)]
pub struct CachedSample {
    pub natural: Arc<CachedFeatures>,
    pub variants: Vec<Variant>,
    pub target: Target,
}

/// Cached features aligned with `manifest.samples`.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub samples: Vec<CachedSample>,
}

impl FeatureCache {
    /// Examples for the given sample indices, keeping only variants whose
    /// pool room is not excluded.
    pub fn examples(&self, indices: &[usize], excluded_pool_rooms: &[&str]) -> Vec<Example> {
        indices
            .iter()
            .map(|&i| {
                let s = &self.samples[i];
                Example {
                    natural: s.natural.clone(),
                    variants: s
                        .variants
                        .iter()
                        .filter(|v| !excluded_pool_rooms.contains(&v.pool_room.as_str()))
                        .map(|v| v.features.clone())
                        .collect(),
                    target: s.target,
                }
            })
            .collect()
    }
}

pub fn target_of(sample: &LabeledSample, distance_threshold_m: f64) -> Target {
    Target {
        presence: sample.presence,
        pixel: sample.azimuth_x,
        near: sample.radial_distance.map(|r| r <= distance_threshold_m),
    }
}

fn variant_rng(seed: u64, sample: usize, variant: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_0000_0000_0000);
    rng.set_stream(((sample as u64) << 8) | variant as u64);
    rng
}

fn clip_at(recording: &MultiChannelClip, offset_s: f64) -> Result<MultiChannelClip> {
    let start = crate::audio::offset_to_index(offset_s, recording.sample_rate());
    recording.slice(start, CLIP_SAMPLES)
}

/// Features for one labeled clip and its augmentation variants.
pub fn cache_sample(
    extractor: &FeatureExtractor,
    index: usize,
    sample: &LabeledSample,
    clip: &MultiChannelClip,
    profile: &EmptyRoomProfile,
    pool: Option<&AugmentationPool>,
    cfg: &CacheConfig,
) -> Result<CachedSample> {
    let natural = Arc::new(extractor.cache(clip, profile)?);
    let mut variants = Vec::new();
    if let Some(pool) = pool {
        let eligible = pool.eligible(&[sample.room_id.as_str()]);
        let weight = AugmentationWeight::new(cfg.aug_weight)?;
        for v in 0..cfg.variants {
            let mut rng = variant_rng(cfg.seed, index, v);
            let Some(pool_index) = draw_pool_entry(&mut rng, &eligible) else {
                break;
            };
            let entry = &pool.entries[pool_index];
            let span = entry.audio.len().saturating_sub(CLIP_SAMPLES);
            let start = if span == 0 { 0 } else { rng.gen_range(0..=span) };
            let foreign = entry.audio.slice(start, CLIP_SAMPLES)?;
            let aug = Augmentation { weight, pool_index };
            let mixed = aug.mix_waveforms(clip, &foreign)?;
            let mixed_profile = aug.mix_profiles(profile, &entry.profile)?;
            variants.push(Variant {
                pool_room: entry.room_id.clone(),
                features: Arc::new(extractor.cache_normalized(&mixed, &mixed_profile)?),
            });
        }
    }
    Ok(CachedSample {
        natural,
        variants,
        target: target_of(sample, cfg.distance_threshold_m),
    })
}

/// Builds the feature cache for every sample in the manifest.
pub fn build_cache(
    manifest: &Manifest,
    profiles: &BTreeMap<ProfileKey, EmptyRoomProfile>,
    pool: Option<&AugmentationPool>,
    cfg: &CacheConfig,
) -> Result<FeatureCache> {
    let extractor = FeatureExtractor::new();
    let mut by_path: BTreeMap<&PathBuf, Vec<usize>> = BTreeMap::new();
    for (i, s) in manifest.samples.iter().enumerate() {
        s.validate()?;
        by_path.entry(&s.clip.path).or_default().push(i);
    }
    let groups: Vec<(&PathBuf, Vec<usize>)> = by_path.into_iter().collect();
    let built: Vec<Vec<(usize, CachedSample)>> = groups
        .par_iter()
        .map(|(path, indices)| {
            let recording = read_recording(path, ReadOptions::channels(4))?;
            indices
                .iter()
                .map(|&i| {
                    let s = &manifest.samples[i];
                    let profile = profiles
                        .get(&(s.room_id.clone(), s.robot_condition))
                        .ok_or_else(|| Error::MissingEmptyProfile {
                            room_id: s.room_id.clone(),
                            condition: s.robot_condition.to_string(),
                        })?;
                    let clip = clip_at(&recording, s.clip.offset_s)?;
                    Ok((i, cache_sample(&extractor, i, s, &clip, profile, pool, cfg)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut built: HashMap<usize, CachedSample> = built.into_iter().flatten().collect();
    let samples = (0..manifest.samples.len())
        .map(|i| built.remove(&i).expect("every sample cached"))
        .collect();
    Ok(FeatureCache { samples })
}

/// Loads one labeled clip from disk.
pub fn load_clip(sample: &LabeledSample) -> Result<MultiChannelClip> {
    let recording = read_recording(&sample.clip.path, ReadOptions::channels(4))?;
    let clip = clip_at(&recording, sample.clip.offset_s)?;
    debug_assert_eq!(clip.duration(), CLIP_SECONDS);
    Ok(clip)
}
