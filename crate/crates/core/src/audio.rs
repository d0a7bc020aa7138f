//! Multi-channel clips, RMS normalization, clip sampling and WAV I/O.
//!
//! Samples are held as `f64` in memory and written as 32-bit float WAV, so a
//! write/read cycle of a file that was read from disk is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;
/// Target pooled RMS every clip is normalized to before analysis.
pub const TARGET_RMS: f64 = 0.02;
/// Pooled RMS below which a clip is treated as silent.
pub const SILENCE_FLOOR: f64 = 1e-8;
pub const CLIP_SECONDS: f64 = 1.0;
pub const CLIP_RATE_HZ: f64 = 4.0;

/// Aligned audio for `n` microphones at a common sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultiChannelClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::ChannelCountMismatch {
                expected: 1,
                found: 0,
            });
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch(format!(
                "channel lengths differ ({} vs {})",
                len,
                bad.len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn zeros(n_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]; n_channels],
            sample_rate,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn channel_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Copies `len` samples starting at `start` from every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::RecordingTooShort {
                duration_s: self.duration(),
                needed_s: (start + len) as f64 / self.sample_rate as f64,
            });
        }
        Ok(Self {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            channels: idx.iter().map(|&i| self.channels[i].clone()).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.channels {
            for v in c.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// RMS of every channel plus the RMS pooled over all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsLevels {
    pub per_channel: Vec<f64>,
    pub pooled: f64,
}

pub fn rms(clip: &MultiChannelClip) -> RmsLevels {
    let per_sum: Vec<f64> = clip
        .channels
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let n = clip.len().max(1) as f64;
    let per_channel = per_sum.iter().map(|s| (s / n).sqrt()).collect();
    let pooled = (per_sum.iter().sum::<f64>() / (n * clip.n_channels() as f64)).sqrt();
    RmsLevels {
        per_channel,
        pooled,
    }
}

/// Scales every channel by one shared factor so the pooled RMS equals `target`.
pub fn normalize_rms(clip: &MultiChannelClip, target: f64) -> Result<MultiChannelClip> {
    let level = rms(clip).pooled;
    if !(level >= SILENCE_FLOOR) {
        return Err(Error::SilentClip { rms: level });
    }
    let mut out = clip.clone();
    out.scale(target / level);
    Ok(out)
}

/// Start offsets (seconds) of overlapping clips taken at `rate_hz`.
pub fn sample_clips(duration_s: f64, clip_s: f64, rate_hz: f64) -> Result<Vec<f64>> {
    // Tolerate float noise in durations derived from sample counts.
    const EPS: f64 = 1e-9;
    if duration_s + EPS < clip_s {
        return Err(Error::RecordingTooShort {
            duration_s,
            needed_s: clip_s,
        });
    }
    let stride = 1.0 / rate_hz;
    let count = ((duration_s - clip_s + EPS) / stride).floor() as usize + 1;
    Ok((0..count).map(|k| k as f64 * stride).collect())
}

/// Sample index of a clip offset, rounded to the nearest sample.
pub fn offset_to_index(offset_s: f64, sample_rate: u32) -> usize {
    (offset_s * sample_rate as f64).round() as usize
}

/// Clip offsets for a recording, as sample indices.
pub fn clip_starts(clip: &MultiChannelClip) -> Result<Vec<usize>> {
    Ok(sample_clips(clip.duration(), CLIP_SECONDS, CLIP_RATE_HZ)?
        .into_iter()
        .map(|o| offset_to_index(o, clip.sample_rate))
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Required channel count, if any.
    pub channels: Option<usize>,
    /// Accept any sample rate instead of requiring 44.1 kHz.
    pub allow_any_rate: bool,
}

impl ReadOptions {
    pub fn channels(n: usize) -> Self {
        Self {
            channels: Some(n),
            allow_any_rate: false,
        }
    }
}

pub fn read_recording(path: impl AsRef<Path>, opts: ReadOptions) -> Result<MultiChannelClip> {
    let path = path.as_ref();
    let malformed = |reason: String| Error::MalformedFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => malformed(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE && !opts.allow_any_rate {
        return Err(Error::UnsupportedSampleRate {
            found: spec.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    let n_ch = spec.channels as usize;
    if let Some(expected) = opts.channels {
        if expected != n_ch {
            return Err(Error::ChannelCountMismatch {
                expected,
                found: n_ch,
            });
        }
    }
    if n_ch == 0 {
        return Err(malformed("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Int, bits @ 8..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
        (fmt, bits) => return Err(malformed(format!("unsupported format {fmt:?}/{bits}"))),
    }
    .map_err(|e| malformed(e.to_string()))?;
    if interleaved.len() % n_ch != 0 {
        return Err(malformed("truncated frame".into()));
    }
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    MultiChannelClip::new(channels, spec.sample_rate)
}

/// Writes the clip as interleaved 32-bit float WAV.
pub fn write_recording(path: impl AsRef<Path>, clip: &MultiChannelClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::MalformedFile {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for i in 0..clip.len() {
        for c in &clip.channels {
            writer.write_sample(c[i] as f32).map_err(wrap)?;
        }
    }
    writer.finalize().map_err(wrap)
}
