//! The learnable person detector.
//!
//! Fixed features (GCC-PHAT curves for every microphone pair plus pooled
//! background-subtracted spectrogram energy) feed a two-layer MLP with four
//! linear heads: `θ_sin`, `θ_cos`, a near/far logit and a presence logit.

pub mod checkpoint;
pub mod dataset;
pub mod features;
pub mod gradcheck;
pub mod model;
pub mod train;

pub use features::{CachedFeatures, FeatureExtractor, FeatureVector, FEATURE_LEN};
pub use model::{DetectorModel, LossBreakdown, LossWeights, Predictions, Target};
pub use train::{EpochLog, Example, TrainConfig, Trainer};

use crate::audio::MultiChannelClip;
use crate::error::Result;
use crate::spectro::EmptyRoomProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub angle_deg: f64,
    pub near: bool,
    pub present: bool,
    pub predictions: Predictions,
}

/// Runs the detector on one raw 1 s clip.
pub fn predict(
    model: &DetectorModel,
    extractor: &FeatureExtractor,
    clip: &MultiChannelClip,
    profile: &EmptyRoomProfile,
) -> Result<Detection> {
    let f = extractor.extract(clip, profile, model.w_backsub.clamp(0.0, 1.0))?;
    let p = model.forward(&f.to_vec())?;
    Ok(Detection {
        angle_deg: p.angle_deg(),
        near: p.near(),
        present: p.present(),
        predictions: p,
    })
}
