//! Empty-room augmentation: place a recorded person into a synthetic room by
//! mixing in foreign empty-room audio, and mix the subtraction profiles with
//! the same weight.

use rand::Rng;

use crate::audio::{normalize_rms, MultiChannelClip, TARGET_RMS};
use crate::error::{Error, Result};
use crate::spectro::{EmptyRoomProfile, Spectrogram};

pub const DEFAULT_WEIGHT: f64 = 0.3;
pub const WEIGHT_SWEEP: [f64; 4] = [0.0, 0.1, 0.3, 0.5];

/// Mixing weight of the foreign empty room, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AugmentationWeight(f64);

impl AugmentationWeight {
    pub fn new(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::OutOfRange {
                value: w,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(Self(w))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for AugmentationWeight {
    fn default() -> Self {
        Self(DEFAULT_WEIGHT)
    }
}

/// The pairing chosen for one training sample. Both mixes of that sample go
/// through this record so the waveform and the profile share one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub weight: AugmentationWeight,
    /// Index into the augmentation pool.
    pub pool_index: usize,
}

impl Augmentation {
    pub fn mix_waveforms(&self, x_r: &MultiChannelClip, x_aug: &MultiChannelClip) -> Result<MultiChannelClip> {
        mix_waveforms(x_r, x_aug, self.weight)
    }

    pub fn mix_profiles(&self, natural: &EmptyRoomProfile, synthetic: &EmptyRoomProfile) -> Result<EmptyRoomProfile> {
        mix_profiles(natural, synthetic, self.weight)
    }
}

/// Draws a pool entry uniformly among the eligible indices.
pub fn draw_pool_entry<R: Rng>(rng: &mut R, eligible: &[usize]) -> Option<usize> {
    if eligible.is_empty() {
        None
    } else {
        Some(eligible[rng.gen_range(0..eligible.len())])
    }
}

/// `normalize((1 - w)·normalize(x_r) + w·normalize(x_aug))`.
///
/// A zero weight returns `normalize(x_r)` untouched, which keeps the
/// un-augmented path bit-identical.
pub fn mix_waveforms(
    x_r: &MultiChannelClip,
    x_aug: &MultiChannelClip,
    w: AugmentationWeight,
) -> Result<MultiChannelClip> {
    if x_r.len() != x_aug.len() || x_r.n_channels() != x_aug.n_channels() {
        return Err(Error::LengthMismatch(format!(
            "{}x{} vs {}x{}",
            x_r.n_channels(),
            x_r.len(),
            x_aug.n_channels(),
            x_aug.len()
        )));
    }
    let a = normalize_rms(x_r, TARGET_RMS)?;
    if w.0 == 0.0 {
        return Ok(a);
    }
    let b = normalize_rms(x_aug, TARGET_RMS)?;
    let mut mixed = a;
    for c in 0..mixed.n_channels() {
        let src = b.channel(c);
        for (m, &v) in mixed.channel_mut(c).iter_mut().zip(src) {
            *m = (1.0 - w.0) * *m + w.0 * v;
        }
    }
    normalize_rms(&mixed, TARGET_RMS)
}

fn mix_spectrograms(a: &Spectrogram, b: &Spectrogram, w: f64) -> Result<Spectrogram> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(Spectrogram {
        n_bins: a.n_bins,
        n_frames: a.n_frames,
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect(),
    })
}

/// Convex combination of the natural and synthetic empty-room profiles.
pub fn mix_profiles(
    natural: &EmptyRoomProfile,
    synthetic: &EmptyRoomProfile,
    w: AugmentationWeight,
) -> Result<EmptyRoomProfile> {
    if natural.channels.len() != synthetic.channels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} channels",
            natural.channels.len(),
            synthetic.channels.len()
        )));
    }
    if w.0 == 0.0 {
        return Ok(natural.clone());
    }
    let channels = natural
        .channels
        .iter()
        .zip(&synthetic.channels)
        .map(|(a, b)| mix_spectrograms(a, b, w.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmptyRoomProfile {
        room_id: format!("{}+{}", natural.room_id, synthetic.room_id),
        robot_condition: natural.robot_condition,
        n_clips: natural.n_clips,
        channels,
    })
}
