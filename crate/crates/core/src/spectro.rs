//! STFT, signed log compression, empty-room profiles and background
//! subtraction.
//!
//! A 1 s clip at 44.1 kHz gives a `[2, 257, 345]` spectrogram per microphone:
//! plane 0 holds the compressed real part and plane 1 the compressed imaginary
//! part, each mapped into the nominal range `[0, 1]`.

use std::io::{Read, Write};
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};

use crate::audio::{self, MultiChannelClip, SAMPLE_RATE, TARGET_RMS};
use crate::error::{Error, Result};
use crate::manifest::RobotCondition;

pub const WINDOW: usize = 512;
pub const HOP: usize = 128;
pub const N_BINS: usize = WINDOW / 2 + 1;
pub const CLIP_SAMPLES: usize = SAMPLE_RATE as usize;
/// Frames for a 1 s clip with centered padding.
pub const N_FRAMES: usize = 1 + CLIP_SAMPLES / HOP;
pub const PLANE_LEN: usize = N_BINS * N_FRAMES;

/// Log compression knee.
pub const LOG_EPS: f64 = 1e-3;
/// Compressed values at these bounds map to 0 and 1.
pub const LOG_MIN: f64 = -7.0;
pub const LOG_MAX: f64 = 7.0;
/// Minimum empty-room audio accepted for a profile.
pub const MIN_PROFILE_SECONDS: f64 = 10.0;

/// Complex STFT laid out bin-major: `data[bin * n_frames + frame]`.
#[derive(Debug, Clone)]
pub struct ComplexStft {
    pub n_bins: usize,
    pub n_frames: usize,
    pub data: Vec<Complex<f64>>,
}

impl ComplexStft {
    pub fn at(&self, bin: usize, frame: usize) -> Complex<f64> {
        self.data[bin * self.n_frames + frame]
    }
}

/// Hann-windowed STFT with centered reflect padding.
#[derive(Clone)]
pub struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("window", &self.window.len()).finish()
    }
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let window = hann(WINDOW);
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(WINDOW);
        Self { window, fft }
    }

    pub fn frames_for(len: usize) -> usize {
        1 + len / HOP
    }

    /// STFT of an arbitrary-length waveform (at least `WINDOW / 2 + 1` samples).
    pub fn process(&self, x: &[f64]) -> ComplexStft {
        let n = x.len();
        assert!(n > WINDOW / 2, "waveform too short for reflect padding");
        let pad = WINDOW / 2;
        let n_frames = Self::frames_for(n);
        let padded: Vec<f64> = (0..n + 2 * pad)
            .map(|i| {
                let j = i as isize - pad as isize;
                let j = if j < 0 {
                    -j
                } else if j >= n as isize {
                    2 * (n as isize - 1) - j
                } else {
                    j
                };
                x[j as usize]
            })
            .collect();
        let mut data = vec![Complex::new(0.0, 0.0); N_BINS * n_frames];
        let mut frame = self.fft.make_input_vec();
        let mut spectrum = self.fft.make_output_vec();
        let mut scratch = self.fft.make_scratch_vec();
        for f in 0..n_frames {
            let start = f * HOP;
            for (k, slot) in frame.iter_mut().enumerate() {
                *slot = padded[start + k] * self.window[k];
            }
            self.fft
                .process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
                .expect("fft sizes are fixed");
            for (b, v) in spectrum.iter().enumerate() {
                data[b * n_frames + f] = *v;
            }
        }
        ComplexStft {
            n_bins: N_BINS,
            n_frames,
            data,
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// STFT of exactly one second of one channel.
pub fn stft(stft: &Stft, waveform: &[f64]) -> Result<ComplexStft> {
    if waveform.len() != CLIP_SAMPLES {
        return Err(Error::WrongLength {
            expected: CLIP_SAMPLES,
            found: waveform.len(),
        });
    }
    Ok(stft.process(waveform))
}

/// Sign-preserving log compression `sign(v)·ln(1 + |v|/ε)`.
#[inline]
pub fn signed_log(v: f64) -> f64 {
    v.signum() * (1.0 + v.abs() / LOG_EPS).ln()
}

/// Affine map from the compressed domain into the nominal `[0, 1]` range.
#[inline]
pub fn to_unit(u: f64) -> f64 {
    (u - LOG_MIN) / (LOG_MAX - LOG_MIN)
}

/// Two-plane log-scaled spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub n_bins: usize,
    pub n_frames: usize,
    /// `[plane][bin][frame]`, flattened.
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn shape(&self) -> [usize; 3] {
        [2, self.n_bins, self.n_frames]
    }

    pub fn zeros(n_bins: usize, n_frames: usize) -> Self {
        Self {
            n_bins,
            n_frames,
            data: vec![0.0; 2 * n_bins * n_frames],
        }
    }

    pub fn filled(n_bins: usize, n_frames: usize, value: f64) -> Self {
        Self {
            n_bins,
            n_frames,
            data: vec![value; 2 * n_bins * n_frames],
        }
    }

    #[inline]
    pub fn index(&self, plane: usize, bin: usize, frame: usize) -> usize {
        (plane * self.n_bins + bin) * self.n_frames + frame
    }

    pub fn get(&self, plane: usize, bin: usize, frame: usize) -> f64 {
        self.data[self.index(plane, bin, frame)]
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Writes a small binary dump: magic, dims, then little-endian `f64` values.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"FFSPEC01")?;
        for d in self.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::ShapeMismatch(format!("spectrogram dump: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != b"FFSPEC01" {
            return Err(bad("bad magic"));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            *d = u64::from_le_bytes(b) as usize;
        }
        if dims[0] != 2 {
            return Err(bad("expected two planes"));
        }
        let n = 2 * dims[1] * dims[2];
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated data"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            n_bins: dims[1],
            n_frames: dims[2],
            data,
        })
    }
}

/// Compresses the real and imaginary planes independently.
pub fn log_scale(x: &ComplexStft) -> Spectrogram {
    let plane = x.n_bins * x.n_frames;
    let mut data = vec![0.0; 2 * plane];
    let (re, im) = data.split_at_mut(plane);
    for ((c, r), i) in x.data.iter().zip(re.iter_mut()).zip(im.iter_mut()) {
        *r = to_unit(signed_log(c.re));
        *i = to_unit(signed_log(c.im));
    }
    Spectrogram {
        n_bins: x.n_bins,
        n_frames: x.n_frames,
        data,
    }
}

/// Normalizes a 1 s clip to the target RMS and returns one spectrogram per channel.
pub fn clip_spectrograms(stft_plan: &Stft, clip: &MultiChannelClip) -> Result<Vec<Spectrogram>> {
    let normalized = audio::normalize_rms(clip, TARGET_RMS)?;
    spectrograms_of_normalized(stft_plan, &normalized)
}

/// Per-channel spectrograms of a clip that is already RMS-normalized.
pub fn spectrograms_of_normalized(
    stft_plan: &Stft,
    clip: &MultiChannelClip,
) -> Result<Vec<Spectrogram>> {
    clip.channels()
        .iter()
        .map(|c| stft(stft_plan, c).map(|s| log_scale(&s)))
        .collect()
}

/// Average spectrogram of an empty room, one per microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct EmptyRoomProfile {
    pub room_id: String,
    pub robot_condition: RobotCondition,
    pub n_clips: usize,
    pub channels: Vec<Spectrogram>,
}

impl EmptyRoomProfile {
    /// Element-wise mean over per-clip spectrogram sets.
    pub fn from_clip_spectrograms(
        room_id: impl Into<String>,
        robot_condition: RobotCondition,
        clips: &[Vec<Spectrogram>],
    ) -> Result<Self> {
        let first = clips.first().ok_or(Error::InsufficientEmptyAudio {
            found_s: 0.0,
            needed_s: MIN_PROFILE_SECONDS,
        })?;
        let mut sums: Vec<Spectrogram> = first.clone();
        for set in &clips[1..] {
            if set.len() != sums.len() {
                return Err(Error::ShapeMismatch("channel count differs between clips".into()));
            }
            for (acc, s) in sums.iter_mut().zip(set) {
                acc.check_same_shape(s)?;
                for (a, v) in acc.data.iter_mut().zip(&s.data) {
                    *a += v;
                }
            }
        }
        let inv = 1.0 / clips.len() as f64;
        for acc in &mut sums {
            acc.data.iter_mut().for_each(|v| *v *= inv);
        }
        Ok(Self {
            room_id: room_id.into(),
            robot_condition,
            n_clips: clips.len(),
            channels: sums,
        })
    }

    /// Writes every channel as consecutive spectrogram dumps preceded by a
    /// short text header line.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "footfall-profile v1 room={} condition={} clips={} channels={}",
            self.room_id,
            self.robot_condition,
            self.n_clips,
            self.channels.len()
        )?;
        for c in &self.channels {
            c.write_dump(&mut w)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: String| Error::ShapeMismatch(format!("profile file: {m}"));
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte).map_err(|_| bad("truncated header".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header).map_err(|e| bad(e.to_string()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("footfall-profile") || fields.next() != Some("v1") {
            return Err(bad("not a profile".into()));
        }
        let mut room = None;
        let mut cond = None;
        let mut clips = None;
        let mut channels = None;
        for kv in fields {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(kv.to_string()))?;
            match k {
                "room" => room = Some(v.to_string()),
                "condition" => cond = Some(v.parse::<RobotCondition>()?),
                "clips" => clips = v.parse::<usize>().ok(),
                "channels" => channels = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let n = channels.ok_or_else(|| bad("missing channels".into()))?;
        let chans = (0..n)
            .map(|_| Spectrogram::read_dump(&mut r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            room_id: room.ok_or_else(|| bad("missing room".into()))?,
            robot_condition: cond.ok_or_else(|| bad("missing condition".into()))?,
            n_clips: clips.unwrap_or(0),
            channels: chans,
        })
    }
}

/// Builds an empty-room profile from a recording by averaging the
/// spectrograms of its non-overlapping 1 s clips.
pub fn empty_profile(
    stft_plan: &Stft,
    audio: &MultiChannelClip,
    room_id: &str,
    robot_condition: RobotCondition,
) -> Result<EmptyRoomProfile> {
    let duration = audio.duration();
    if duration + 1e-9 < MIN_PROFILE_SECONDS {
        return Err(Error::InsufficientEmptyAudio {
            found_s: duration,
            needed_s: MIN_PROFILE_SECONDS,
        });
    }
    let n_clips = audio.len() / CLIP_SAMPLES;
    let sets = (0..n_clips)
        .map(|k| {
            let clip = audio.slice(k * CLIP_SAMPLES, CLIP_SAMPLES)?;
            clip_spectrograms(stft_plan, &clip)
        })
        .collect::<Result<Vec<_>>>()?;
    EmptyRoomProfile::from_clip_spectrograms(room_id, robot_condition, &sets)
}

/// `clamp(S_in - w·S_empty, 0, 1)` element-wise.
pub fn subtract_background(s_in: &Spectrogram, s_empty: &Spectrogram, w: f64) -> Result<Spectrogram> {
    s_in.check_same_shape(s_empty)?;
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::OutOfRange {
            value: w,
            min: 0.0,
            max: 1.0,
        });
    }
    let data = s_in
        .data
        .iter()
        .zip(&s_empty.data)
        .map(|(a, e)| (a - w * e).clamp(0.0, 1.0))
        .collect();
    Ok(Spectrogram {
        n_bins: s_in.n_bins,
        n_frames: s_in.n_frames,
        data,
    })
}
