//! Streaming tracker: keeps the latest 1 s of audio, runs the detector at a
//! fixed cadence and pans toward confident detections, pausing inference
//! while a pan is in progress.

use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::audio::{MultiChannelClip, CLIP_RATE_HZ, SAMPLE_RATE};
use crate::detector::{predict, DetectorModel, FeatureExtractor};
use crate::error::{Error, Result};
use crate::geometry::{circular_error, wrap_degrees};
use crate::spectro::{EmptyRoomProfile, CLIP_SAMPLES};

/// Horizontal field of view of the camera being panned.
pub const CAMERA_FOV_DEG: f64 = 58.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub presence_threshold: f64,
    pub fov_deg: f64,
    /// A new pan is issued only when the detection is this far from the current pan.
    pub hysteresis_deg: f64,
    pub settle_s: f64,
    pub decision_hz: f64,
    pub initial_pan_deg: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            presence_threshold: 0.5,
            fov_deg: CAMERA_FOV_DEG,
            hysteresis_deg: CAMERA_FOV_DEG / 4.0,
            settle_s: 0.1,
            decision_hz: CLIP_RATE_HZ,
            initial_pan_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Listening,
    Panning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub mode: Mode,
    pub current_pan: f64,
    /// Inference resumes at this time once the running pan has completed.
    pub pan_inhibit_until: Option<f64>,
    pub fov: f64,
}

/// Fixed-capacity multichannel ring buffer shared between the audio
/// accumulator and the decision loop. Reads copy out a whole window under
/// the lock, so a snapshot is never torn.
#[derive(Debug)]
pub struct SharedWindow {
    inner: Mutex<Ring>,
}

#[derive(Debug)]
struct Ring {
    data: Vec<Vec<f64>>,
    head: usize,
    written: u64,
}

impl SharedWindow {
    pub fn new(n_channels: usize, capacity: usize) -> Self {
        Self {
            inner: Mutex::new(Ring {
                data: vec![vec![0.0; capacity]; n_channels],
                head: 0,
                written: 0,
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.inner.lock().expect("window lock").data[0].len()
    }

    /// Appends frames; `block[ch]` must have equal lengths.
    pub fn push(&self, block: &[Vec<f64>]) -> Result<()> {
        let mut ring = self.inner.lock().expect("window lock");
        if block.len() != ring.data.len() {
            return Err(Error::ChannelCountMismatch {
                expected: ring.data.len(),
                found: block.len(),
            });
        }
        let n = block[0].len();
        if block.iter().any(|c| c.len() != n) {
            return Err(Error::LengthMismatch("channels of one block differ in length".into()));
        }
        let cap = ring.data[0].len();
        let head = ring.head;
        for (dst, src) in ring.data.iter_mut().zip(block) {
            for (k, &v) in src.iter().enumerate() {
                dst[(head + k) % cap] = v;
            }
        }
        ring.head = (head + n) % cap;
        ring.written += n as u64;
        Ok(())
    }

    /// Frames pushed so far.
    pub fn written(&self) -> u64 {
        self.inner.lock().expect("window lock").written
    }

    /// The most recent `len` frames and the frame count they end at, or
    /// `None` until that many frames have arrived.
    pub fn snapshot(&self, len: usize) -> Option<(u64, Vec<Vec<f64>>)> {
        let ring = self.inner.lock().expect("window lock");
        let cap = ring.data[0].len();
        if len > cap || ring.written < len as u64 {
            return None;
        }
        let start = (ring.head + cap - len) % cap;
        let out = ring
            .data
            .iter()
            .map(|c| (0..len).map(|k| c[(start + k) % cap]).collect())
            .collect();
        Some((ring.written, out))
    }
}

/// Supplier of multichannel audio blocks.
pub trait AudioSource {
    fn n_channels(&self) -> usize;
    /// Next block of up to `max_frames`; `Ok(None)` marks the end of the stream.
    fn next_block(&mut self, max_frames: usize) -> Result<Option<Vec<Vec<f64>>>>;
}

/// Plays back an in-memory recording.
#[derive(Debug, Clone)]
pub struct ClipSource {
    clip: MultiChannelClip,
    pos: usize,
}

impl ClipSource {
    pub fn new(clip: MultiChannelClip) -> Self {
        Self { clip, pos: 0 }
    }
}

impl AudioSource for ClipSource {
    fn n_channels(&self) -> usize {
        self.clip.n_channels()
    }

    fn next_block(&mut self, max_frames: usize) -> Result<Option<Vec<Vec<f64>>>> {
        if self.pos >= self.clip.len() {
            return Ok(None);
        }
        let end = (self.pos + max_frames).min(self.clip.len());
        let block = self.clip.channels().iter().map(|c| c[self.pos..end].to_vec()).collect();
        self.pos = end;
        Ok(Some(block))
    }
}

/// Camera pan actuator.
pub trait PanSink {
    /// Starts a pan to absolute robot-frame angle `target_deg`.
    fn command(&mut self, target_deg: f64, now_s: f64) -> Result<()>;
    /// Completion time of the last pan, once it has finished by `now_s`.
    fn poll(&mut self, now_s: f64) -> Result<Option<f64>>;
}

/// Pan motor with a fixed start latency and slew rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanSink {
    pub slew_deg_per_s: f64,
    pub latency_s: f64,
    pub position_deg: f64,
    pub commands: Vec<(f64, f64)>,
    done_at: Option<f64>,
}

impl SimulatedPanSink {
    pub fn new(start_deg: f64, slew_deg_per_s: f64, latency_s: f64) -> Self {
        Self {
            slew_deg_per_s,
            latency_s,
            position_deg: start_deg,
            commands: Vec::new(),
            done_at: None,
        }
    }
}

impl PanSink for SimulatedPanSink {
    fn command(&mut self, target_deg: f64, now_s: f64) -> Result<()> {
        if !(self.slew_deg_per_s > 0.0) {
            return Err(Error::SinkFailure("pan motor has no slew rate".into()));
        }
        let travel = circular_error(self.position_deg, target_deg);
        self.done_at = Some(now_s + self.latency_s + travel / self.slew_deg_per_s);
        self.position_deg = wrap_degrees(target_deg);
        self.commands.push((now_s, self.position_deg));
        Ok(())
    }

    fn poll(&mut self, now_s: f64) -> Result<Option<f64>> {
        Ok(self.done_at.filter(|&t| t <= now_s))
    }
}

/// One inference: presence probability and robot-frame angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    pub presence_prob: f64,
    pub angle_deg: f64,
}

/// Anything that turns a 1 s window into an [`Inference`].
pub trait WindowDetector {
    fn infer(&mut self, window: &MultiChannelClip) -> Result<Inference>;
}

/// The trained detector with a fixed empty-room profile.
pub struct ModelDetector<'a> {
    pub model: &'a DetectorModel,
    pub extractor: FeatureExtractor,
    pub profile: &'a EmptyRoomProfile,
}

impl<'a> ModelDetector<'a> {
    pub fn new(model: &'a DetectorModel, profile: &'a EmptyRoomProfile) -> Self {
        Self {
            model,
            extractor: FeatureExtractor::new(),
            profile,
        }
    }
}

impl WindowDetector for ModelDetector<'_> {
    fn infer(&mut self, window: &MultiChannelClip) -> Result<Inference> {
        match predict(self.model, &self.extractor, window, self.profile) {
            Ok(d) => Ok(Inference {
                presence_prob: d.predictions.presence_prob,
                angle_deg: d.angle_deg,
            }),
            // A digitally silent window carries no one.
            Err(Error::SilentClip { .. }) => Ok(Inference {
                presence_prob: 0.0,
                angle_deg: 0.0,
            }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackAction {
    Absent,
    Hold,
    Pan,
    PanComplete,
}

/// One line of the event log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEvent {
    pub t_s: f64,
    pub presence_prob: Option<f64>,
    pub angle_deg: Option<f64>,
    pub action_taken: TrackAction,
    pub pan_deg: f64,
}

impl TrackEvent {
    pub fn is_decision(&self) -> bool {
        self.action_taken != TrackAction::PanComplete
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanRecord {
    pub issued_s: f64,
    pub target_deg: f64,
    pub completed_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub events: Vec<TrackEvent>,
    pub pans: Vec<PanRecord>,
    /// Wall-clock time of every inference.
    pub compute: Vec<Duration>,
    pub final_state: TrackerState,
}

impl TrackOutcome {
    pub fn decisions(&self) -> impl Iterator<Item = &TrackEvent> {
        self.events.iter().filter(|e| e.is_decision())
    }

    pub fn max_compute(&self) -> Duration {
        self.compute.iter().copied().max().unwrap_or_default()
    }

    /// Times at which each completed pan is checked, after settling.
    pub fn checkpoints(&self, settle_s: f64) -> Vec<(f64, f64)> {
        self.pans
            .iter()
            .filter_map(|p| Some((p.completed_s? + settle_s, p.target_deg)))
            .collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Share of checkpoints at which the true angle lies within half the field
/// of view of the pan. `truth` may return `None` when nobody is present.
pub fn tracking_success(checkpoints: &[(f64, f64)], fov_deg: f64, truth: impl Fn(f64) -> Option<f64>) -> Option<f64> {
    let hits: Vec<bool> = checkpoints
        .iter()
        .filter_map(|&(t, pan)| truth(t).map(|a| circular_error(a, pan) <= fov_deg / 2.0))
        .collect();
    (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Runs the tracker over a whole source.
pub fn stream_track(
    source: &mut dyn AudioSource,
    detector: &mut dyn WindowDetector,
    sink: &mut dyn PanSink,
    config: &TrackerConfig,
) -> Result<TrackOutcome> {
    if !(config.decision_hz > 0.0) || !(0.0..=1.0).contains(&config.presence_threshold) {
        return Err(Error::Config("decision rate must be positive and threshold in [0, 1]".into()));
    }
    let fs = SAMPLE_RATE as f64;
    let hop = (fs / config.decision_hz).round() as u64;
    let window = SharedWindow::new(source.n_channels(), CLIP_SAMPLES);
    let mut state = TrackerState {
        mode: Mode::Listening,
        current_pan: wrap_degrees(config.initial_pan_deg),
        pan_inhibit_until: None,
        fov: config.fov_deg,
    };
    let mut out = TrackOutcome {
        events: Vec::new(),
        pans: Vec::new(),
        compute: Vec::new(),
        final_state: state,
    };
    let mut next_tick = CLIP_SAMPLES as u64;
    while let Some(block) = source.next_block(hop as usize)? {
        if block.len() != source.n_channels() {
            return Err(Error::ChannelCountMismatch {
                expected: source.n_channels(),
                found: block.len(),
            });
        }
        let n = block[0].len();
        if n == 0 {
            return Err(Error::SourceUnderrun);
        }
        let mut offset = 0;
        while offset < n {
            let written = window.written();
            let take = ((next_tick - written) as usize).min(n - offset);
            let part: Vec<Vec<f64>> = block.iter().map(|c| c[offset..offset + take].to_vec()).collect();
            window.push(&part)?;
            offset += take;
            if window.written() == next_tick {
                let now = next_tick as f64 / fs;
                decide(now, &window, detector, sink, config, &mut state, &mut out)?;
                next_tick += hop;
            }
        }
    }
    out.final_state = state;
    Ok(out)
}

fn decide(
    now: f64,
    window: &SharedWindow,
    detector: &mut dyn WindowDetector,
    sink: &mut dyn PanSink,
    config: &TrackerConfig,
    state: &mut TrackerState,
    out: &mut TrackOutcome,
) -> Result<()> {
    if state.mode == Mode::Panning {
        if state.pan_inhibit_until.is_none() {
            if let Some(done) = sink.poll(now)? {
                state.pan_inhibit_until = Some(done + config.settle_s);
                if let Some(p) = out.pans.last_mut() {
                    p.completed_s = Some(done);
                }
                out.events.push(TrackEvent {
                    t_s: done,
                    presence_prob: None,
                    angle_deg: None,
                    action_taken: TrackAction::PanComplete,
                    pan_deg: state.current_pan,
                });
            }
        }
        match state.pan_inhibit_until {
            Some(t) if now >= t => {
                state.mode = Mode::Listening;
                state.pan_inhibit_until = None;
            }
            _ => return Ok(()),
        }
    }
    let (_, data) = window.snapshot(CLIP_SAMPLES).expect("tick only after a full window");
    let clip = MultiChannelClip::new(data, SAMPLE_RATE)?;
    let started = Instant::now();
    let inf = detector.infer(&clip)?;
    out.compute.push(started.elapsed());
    let action = if inf.presence_prob <= config.presence_threshold {
        TrackAction::Absent
    } else if circular_error(inf.angle_deg, state.current_pan) > config.hysteresis_deg {
        sink.command(inf.angle_deg, now)?;
        state.mode = Mode::Panning;
        state.current_pan = wrap_degrees(inf.angle_deg);
        out.pans.push(PanRecord {
            issued_s: now,
            target_deg: state.current_pan,
            completed_s: None,
        });
        TrackAction::Pan
    } else {
        TrackAction::Hold
    };
    out.events.push(TrackEvent {
        t_s: now,
        presence_prob: Some(inf.presence_prob),
        angle_deg: Some(inf.angle_deg),
        action_taken: action,
        pan_deg: state.current_pan,
    });
    Ok(())
}
