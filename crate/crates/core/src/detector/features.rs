//! Fixed front end of the detector.
//!
//! For each microphone pair, 64 GCC-PHAT lags centered on zero; for each
//! microphone, the mean background-subtracted spectrogram value in 32
//! frequency bands × 8 time segments. 384 + 1024 = 1408 values.
//!
//! The energy block depends on the trainable subtraction weight, so training
//! works from a [`CachedFeatures`] table: the energy block evaluated on a
//! grid of weights, linearly interpolated in between.

use crate::audio::{normalize_rms, MultiChannelClip, TARGET_RMS};
use crate::doa::GccPhat;
use crate::error::{Error, Result};
use crate::geometry::MicPair;
use crate::spectro::{self, EmptyRoomProfile, Spectrogram, Stft, CLIP_SAMPLES};

pub const N_MICS: usize = 4;
pub const N_PAIRS: usize = N_MICS * (N_MICS - 1) / 2;
pub const GCC_LAGS: usize = 64;
/// Lags span `-GCC_HALF..GCC_HALF`.
pub const GCC_HALF: usize = GCC_LAGS / 2;
pub const N_BANDS: usize = 32;
pub const N_SEGMENTS: usize = 8;
pub const GCC_LEN: usize = N_PAIRS * GCC_LAGS;
pub const CELLS_PER_MIC: usize = N_BANDS * N_SEGMENTS;
pub const ENERGY_LEN: usize = N_MICS * CELLS_PER_MIC;
pub const FEATURE_LEN: usize = GCC_LEN + ENERGY_LEN;
/// Subtraction weights at which the energy table is tabulated: `g / (GRID - 1)`.
pub const WEIGHT_GRID: usize = 11;

/// The six microphone pairs in feature order.
pub const PAIRS: [MicPair; N_PAIRS] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// `[pair][lag]`, lag index `k` ↔ lag `k - 32`.
    pub gcc: Vec<f64>,
    /// `[mic][band][segment]`.
    pub energy: Vec<f64>,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_LEN);
        v.extend_from_slice(&self.gcc);
        v.extend_from_slice(&self.energy);
        v
    }
}

/// Uniform partition of `n` items into `parts` contiguous ranges.
fn edges(n: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|k| k * n / parts).collect()
}

/// Mean over every pooling cell of `clamp(s - w·e, 0, 1)` plus its exact
/// derivative with respect to `w` (zero on clamped elements).
pub fn pooled_energy(s_in: &Spectrogram, s_empty: &Spectrogram, w: f64) -> (Vec<f64>, Vec<f64>) {
    let mut values = vec![0.0; CELLS_PER_MIC];
    let mut slopes = vec![0.0; CELLS_PER_MIC];
    let bands = edges(s_in.n_bins, N_BANDS);
    let segs = edges(s_in.n_frames, N_SEGMENTS);
    for plane in 0..2 {
        for b in 0..N_BANDS {
            for bin in bands[b]..bands[b + 1] {
                let row = s_in.index(plane, bin, 0);
                for s in 0..N_SEGMENTS {
                    let cell = b * N_SEGMENTS + s;
                    for f in segs[s]..segs[s + 1] {
                        let x = s_in.data[row + f];
                        let e = s_empty.data[row + f];
                        let v = x - w * e;
                        if v <= 0.0 {
                            continue;
                        }
                        if v >= 1.0 {
                            values[cell] += 1.0;
                        } else {
                            values[cell] += v;
                            slopes[cell] -= e;
                        }
                    }
                }
            }
        }
    }
    for b in 0..N_BANDS {
        for s in 0..N_SEGMENTS {
            let n = 2 * (bands[b + 1] - bands[b]) * (segs[s + 1] - segs[s]);
            let cell = b * N_SEGMENTS + s;
            values[cell] /= n as f64;
            slopes[cell] /= n as f64;
        }
    }
    (values, slopes)
}

/// Energy cells tabulated at every grid weight, `[grid][cell]`.
fn energy_table(s_in: &Spectrogram, s_empty: &Spectrogram) -> Vec<f64> {
    let bands = edges(s_in.n_bins, N_BANDS);
    let segs = edges(s_in.n_frames, N_SEGMENTS);
    let weights: Vec<f64> = (0..WEIGHT_GRID).map(|g| g as f64 / (WEIGHT_GRID - 1) as f64).collect();
    let mut table = vec![0.0; WEIGHT_GRID * CELLS_PER_MIC];
    for plane in 0..2 {
        for b in 0..N_BANDS {
            for bin in bands[b]..bands[b + 1] {
                let row = s_in.index(plane, bin, 0);
                for s in 0..N_SEGMENTS {
                    let cell = b * N_SEGMENTS + s;
                    let xs = &s_in.data[row + segs[s]..row + segs[s + 1]];
                    let es = &s_empty.data[row + segs[s]..row + segs[s + 1]];
                    for (g, &w) in weights.iter().enumerate() {
                        let a: f64 = xs.iter().zip(es).map(|(x, e)| (x - w * e).max(0.0).min(1.0)).sum();
                        table[g * CELLS_PER_MIC + cell] += a;
                    }
                }
            }
        }
    }
    for g in 0..WEIGHT_GRID {
        for b in 0..N_BANDS {
            for s in 0..N_SEGMENTS {
                let n = 2 * (bands[b + 1] - bands[b]) * (segs[s + 1] - segs[s]);
                table[g * CELLS_PER_MIC + b * N_SEGMENTS + s] /= n as f64;
            }
        }
    }
    table
}

/// Precomputed features of one clip: the GCC block plus the energy block
/// tabulated over subtraction weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedFeatures {
    gcc: Vec<f32>,
    /// `[grid][mic * CELLS_PER_MIC + cell]`.
    table: Vec<f32>,
}

impl CachedFeatures {
    pub fn from_parts(gcc: Vec<f32>, table: Vec<f32>) -> Result<Self> {
        if gcc.len() != GCC_LEN || table.len() != WEIGHT_GRID * ENERGY_LEN {
            return Err(Error::DimensionMismatch {
                expected: GCC_LEN + WEIGHT_GRID * ENERGY_LEN,
                found: gcc.len() + table.len(),
            });
        }
        Ok(Self { gcc, table })
    }

    pub fn gcc(&self) -> &[f32] {
        &self.gcc
    }

    /// Writes the feature vector at weight `w` into `out` (length
    /// `FEATURE_LEN`) and `d(energy)/dw` into `slope` (length `ENERGY_LEN`).
    pub fn fill(&self, w: f64, out: &mut [f64], slope: &mut [f64]) {
        debug_assert_eq!(out.len(), FEATURE_LEN);
        debug_assert_eq!(slope.len(), ENERGY_LEN);
        for (o, &g) in out[..GCC_LEN].iter_mut().zip(&self.gcc) {
            *o = g as f64;
        }
        let steps = (WEIGHT_GRID - 1) as f64;
        let pos = w.clamp(0.0, 1.0) * steps;
        let g = (pos.floor() as usize).min(WEIGHT_GRID - 2);
        let t = pos - g as f64;
        let lo = &self.table[g * ENERGY_LEN..(g + 1) * ENERGY_LEN];
        let hi = &self.table[(g + 1) * ENERGY_LEN..(g + 2) * ENERGY_LEN];
        for (((o, d), &a), &b) in out[GCC_LEN..].iter_mut().zip(slope.iter_mut()).zip(lo).zip(hi) {
            let (a, b) = (a as f64, b as f64);
            *o = a + t * (b - a);
            *d = (b - a) * steps;
        }
    }

    pub fn at(&self, w: f64) -> FeatureVector {
        let mut out = vec![0.0; FEATURE_LEN];
        let mut slope = vec![0.0; ENERGY_LEN];
        self.fill(w, &mut out, &mut slope);
        FeatureVector {
            gcc: out[..GCC_LEN].to_vec(),
            energy: out[GCC_LEN..].to_vec(),
        }
    }

    /// Which grid segment `w` falls in; knots separate differentiable pieces.
    pub fn segment_of(w: f64) -> usize {
        ((w.clamp(0.0, 1.0) * (WEIGHT_GRID - 1) as f64).floor() as usize).min(WEIGHT_GRID - 2)
    }
}

/// Computes detector features from raw clips.
#[derive(Debug, Clone, Default)]
pub struct FeatureExtractor {
    stft: Stft,
    gcc: GccPhat,
}

impl FeatureExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    fn check(clip: &MultiChannelClip, profile: &EmptyRoomProfile) -> Result<()> {
        if clip.n_channels() != N_MICS {
            return Err(Error::ChannelCountMismatch {
                expected: N_MICS,
                found: clip.n_channels(),
            });
        }
        if clip.len() != CLIP_SAMPLES {
            return Err(Error::WrongLength {
                expected: CLIP_SAMPLES,
                found: clip.len(),
            });
        }
        if profile.channels.len() != N_MICS {
            return Err(Error::ShapeMismatch(format!(
                "profile has {} channels, clip has {N_MICS}",
                profile.channels.len()
            )));
        }
        Ok(())
    }

    /// GCC block of an RMS-normalized clip.
    pub fn gcc_block(&self, clip: &MultiChannelClip) -> Result<Vec<f64>> {
        let n = GccPhat::fft_len_for(clip.len(), GCC_HALF);
        let spectra: Vec<_> = clip.channels().iter().map(|c| self.gcc.spectrum(c, n)).collect();
        let mut out = Vec::with_capacity(GCC_LEN);
        for &(a, b) in &PAIRS {
            let r = match self.gcc.correlate(&spectra[a], &spectra[b], GCC_HALF) {
                Ok(r) => r.curve,
                Err(Error::DegenerateSignal) => vec![0.0; 2 * GCC_HALF + 1],
                Err(e) => return Err(e),
            };
            // Curve covers -32..=32; keep -32..=31.
            out.extend_from_slice(&r[..GCC_LAGS]);
        }
        Ok(out)
    }

    /// Exact features at subtraction weight `w`.
    pub fn extract(&self, clip: &MultiChannelClip, profile: &EmptyRoomProfile, w: f64) -> Result<FeatureVector> {
        Ok(self.extract_with_slope(clip, profile, w)?.0)
    }

    /// Exact features plus `d(energy)/dw`.
    pub fn extract_with_slope(
        &self,
        clip: &MultiChannelClip,
        profile: &EmptyRoomProfile,
        w: f64,
    ) -> Result<(FeatureVector, Vec<f64>)> {
        Self::check(clip, profile)?;
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::OutOfRange {
                value: w,
                min: 0.0,
                max: 1.0,
            });
        }
        let normalized = normalize_rms(clip, TARGET_RMS)?;
        let specs = spectro::spectrograms_of_normalized(&self.stft, &normalized)?;
        let mut energy = Vec::with_capacity(ENERGY_LEN);
        let mut slopes = Vec::with_capacity(ENERGY_LEN);
        for (s, e) in specs.iter().zip(&profile.channels) {
            if s.shape() != e.shape() {
                return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", s.shape(), e.shape())));
            }
            let (v, d) = pooled_energy(s, e, w);
            energy.extend(v);
            slopes.extend(d);
        }
        let gcc = self.gcc_block(&normalized)?;
        Ok((FeatureVector { gcc, energy }, slopes))
    }

    /// Features of an already-normalized clip, tabulated over the weight grid.
    pub fn cache_normalized(&self, normalized: &MultiChannelClip, profile: &EmptyRoomProfile) -> Result<CachedFeatures> {
        Self::check(normalized, profile)?;
        let specs = spectro::spectrograms_of_normalized(&self.stft, normalized)?;
        let mut table = vec![0f32; WEIGHT_GRID * ENERGY_LEN];
        for (m, (s, e)) in specs.iter().zip(&profile.channels).enumerate() {
            if s.shape() != e.shape() {
                return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", s.shape(), e.shape())));
            }
            let t = energy_table(s, e);
            for g in 0..WEIGHT_GRID {
                let dst = &mut table[g * ENERGY_LEN + m * CELLS_PER_MIC..g * ENERGY_LEN + (m + 1) * CELLS_PER_MIC];
                for (d, v) in dst.iter_mut().zip(&t[g * CELLS_PER_MIC..(g + 1) * CELLS_PER_MIC]) {
                    *d = *v as f32;
                }
            }
        }
        let gcc = self.gcc_block(normalized)?.into_iter().map(|v| v as f32).collect();
        Ok(CachedFeatures { gcc, table })
    }

    pub fn cache(&self, clip: &MultiChannelClip, profile: &EmptyRoomProfile) -> Result<CachedFeatures> {
        let normalized = normalize_rms(clip, TARGET_RMS)?;
        self.cache_normalized(&normalized, profile)
    }
}
