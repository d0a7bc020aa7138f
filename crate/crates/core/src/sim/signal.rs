//! Source synthesis, propagation to the array, reverb and noise beds.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::RealFftPlanner;

use super::motion::{RobotTrack, Trajectory};
use super::scene::{FootstepModel, Reverb, RobotNoise, RoomNoise};
use crate::audio::MultiChannelClip;
use crate::doa::smooth_fft_len;
use crate::error::Result;
use crate::geometry::ArrayGeometry;
use crate::manifest::Action;

/// Footstep onsets and lengths, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignal {
    pub samples: Vec<f64>,
    pub bursts: Vec<Burst>,
}

fn white<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Applies a real frequency response `gain(f_hz)` by zero-padded FFT.
pub fn shape_spectrum(x: &[f64], fs: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = smooth_fft_len(x.len());
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = vec![0.0; n];
    buf[..x.len()].copy_from_slice(x);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("sized buffers");
    for (k, c) in spec.iter_mut().enumerate() {
        *c *= gain(k as f64 * fs / n as f64) / n as f64;
    }
    // The inverse transform wants purely real DC and Nyquist bins.
    spec[0].im = 0.0;
    if n % 2 == 0 {
        let last = spec.len() - 1;
        spec[last].im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("sized buffers");
    out.truncate(x.len());
    out
}

pub fn bandpass(x: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    shape_spectrum(x, fs, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 })
}

/// Footstep train for one action. Every random draw is independent of the
/// action, so two actions with one seed differ only by the amplitude scale.
pub fn synth_source<R: Rng>(rng: &mut R, model: &FootstepModel, action: Action, duration_s: f64, fs: u32) -> SourceSignal {
    let n = (duration_s * fs as f64).round() as usize;
    let mut samples = vec![0.0; n];
    let mut bursts = Vec::new();
    let scale = model.scale(action);
    let fsf = fs as f64;
    let mut t = rng.gen_range(0.0..model.interval_s[1]);
    while t < duration_s {
        let len_s = rng.gen_range(model.burst_s[0]..=model.burst_s[1]);
        let len = (len_s * fsf).round().max(1.0) as usize;
        let amp = model.base_amplitude * (1.0 + model.jitter * rng.gen_range(-1.0..=1.0));
        let raw = white(rng, len);
        let shaped = bandpass(&raw, fsf, model.band_hz[0], model.band_hz[1]);
        let peak = shaped.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let tau = (model.decay_fraction * len as f64).max(1.0);
        let start = (t * fsf).round() as usize;
        for (k, v) in shaped.iter().enumerate() {
            if start + k < n && scale != 0.0 {
                samples[start + k] = scale * amp * v / peak * (-(k as f64) / tau).exp();
            }
        }
        if scale != 0.0 && start < n {
            bursts.push(Burst {
                start,
                len: len.min(n - start),
            });
        }
        t += rng.gen_range(model.interval_s[0]..=model.interval_s[1]);
    }
    SourceSignal { samples, bursts }
}

fn interp(x: &[f64], pos: f64) -> f64 {
    if pos < 0.0 {
        return 0.0;
    }
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return if i < x.len() && pos == i as f64 { x[i] } else { 0.0 };
    }
    let f = pos - i as f64;
    x[i] * (1.0 - f) + x[i + 1] * f
}

/// Direct-path propagation to every microphone: time-varying fractional
/// delay by linear interpolation, `1/max(r, 0.3)` spreading and the
/// microphone's polar gain.
pub fn propagate(
    source: &SourceSignal,
    walker: &Trajectory,
    robot: &RobotTrack,
    geometry: &ArrayGeometry,
    fs: u32,
    c: f64,
) -> Result<MultiChannelClip> {
    geometry.validate()?;
    let n = source.samples.len();
    let n_mics = geometry.mics.len();
    let fsf = fs as f64;
    let mut out = vec![vec![0.0; n]; n_mics];
    let max_delay = ((crate::manifest::MAX_DISTANCE_M + 1.0) / c * fsf).ceil() as usize + 2;
    let mut covered = 0usize;
    for b in &source.bursts {
        let lo = b.start.max(covered);
        let hi = (b.start + b.len + max_delay).min(n);
        for t_idx in lo..hi {
            let t = t_idx as f64 / fsf;
            let src = robot.at(t).to_robot(walker.at(t));
            for (m, mic) in geometry.mics.iter().enumerate() {
                let r = (src[0] - mic.position[0]).hypot(src[1] - mic.position[1]);
                let delay = r / c * fsf;
                let v = interp(&source.samples, t_idx as f64 - delay);
                if v != 0.0 {
                    out[m][t_idx] += v * geometry.gain_toward(m, src) / r.max(0.3);
                }
            }
        }
        covered = covered.max(hi);
    }
    MultiChannelClip::new(out, fs)
}

/// Linear convolution by FFT, truncated to `x.len()`.
fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = smooth_fft_len(x.len() + h.len());
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a = vec![0.0; n];
    a[..x.len()].copy_from_slice(x);
    let mut b = vec![0.0; n];
    b[..h.len()].copy_from_slice(h);
    let mut sa = fwd.make_output_vec();
    let mut sb = fwd.make_output_vec();
    fwd.process(&mut a, &mut sa).expect("sized buffers");
    fwd.process(&mut b, &mut sb).expect("sized buffers");
    for (p, q) in sa.iter_mut().zip(&sb) {
        *p = *p * q / n as f64;
    }
    sa[0].im = 0.0;
    if n % 2 == 0 {
        let last = sa.len() - 1;
        sa[last].im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut sa, &mut out).expect("sized buffers");
    out.truncate(x.len());
    out
}

/// Diffuse exponential tail, decorrelated across microphones.
pub fn add_reverb<R: Rng>(rng: &mut R, clip: &mut MultiChannelClip, source: &SourceSignal, reverb: &Reverb) {
    if !reverb.enabled || reverb.level == 0.0 || source.bursts.is_empty() {
        return;
    }
    let fs = clip.sample_rate() as f64;
    let pre = (reverb.predelay_s * fs).round() as usize;
    let len = (1.5 * reverb.decay_s * fs).ceil() as usize;
    // 60 dB amplitude drop over the decay time.
    let k = 6.9078 / (reverb.decay_s * fs);
    // Unit-energy tail scaled to the requested level.
    let norm = (2.0 * k).sqrt();
    for m in 0..clip.n_channels() {
        let mut h = vec![0.0; pre + len];
        for i in 0..len {
            let g: f64 = StandardNormal.sample(rng);
            h[pre + i] = reverb.level * norm * g * (-k * i as f64).exp();
        }
        let tail = convolve(&source.samples, &h);
        for (o, v) in clip.channel_mut(m).iter_mut().zip(tail) {
            *o += v;
        }
    }
}

fn unit_rms(mut x: Vec<f64>) -> Vec<f64> {
    let r = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
    x
}

fn colored<R: Rng>(rng: &mut R, n: usize, fs: f64, tilt: f64, lo: f64, hi: f64) -> Vec<f64> {
    let w = white(rng, n);
    unit_rms(shape_spectrum(&w, fs, |f| {
        if f < lo || f > hi {
            0.0
        } else {
            f.max(1.0).powf(-tilt / 2.0)
        }
    }))
}

fn hum(n: usize, fs: f64, f0: f64, level: f64, phases: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            phases
                .iter()
                .enumerate()
                .map(|(k, ph)| level / (k + 1) as f64 * (2.0 * PI * f0 * (k + 1) as f64 * t + ph).sin())
                .sum::<f64>()
        })
        .collect()
}

/// Room bed: tilted broadband noise (independent per channel plus a shared
/// part) and mains hum.
pub fn room_bed<R: Rng>(rng: &mut R, n_channels: usize, n: usize, fs: u32, spec: &RoomNoise) -> Vec<Vec<f64>> {
    let fsf = fs as f64;
    let rho = spec.shared_fraction.clamp(0.0, 1.0);
    let tilt = |f: f64| if f < 20.0 { 0.0 } else { f.powf(-spec.tilt / 2.0) };
    let shared_gain = |f: f64| if f <= spec.coherent_hz { rho.sqrt() * tilt(f) } else { 0.0 };
    let own_gain = |f: f64| if f <= spec.coherent_hz { (1.0 - rho).sqrt() * tilt(f) } else { tilt(f) };
    let shared = shape_spectrum(&white(rng, n), fsf, shared_gain);
    let phases: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let h = hum(n, fsf, spec.hum_hz, spec.hum_level, &phases);
    let beds: Vec<Vec<f64>> = (0..n_channels)
        .map(|_| {
            let own = shape_spectrum(&white(rng, n), fsf, own_gain);
            own.iter().zip(&shared).map(|(a, s)| a + s).collect()
        })
        .collect();
    let power = beds.iter().flatten().map(|v| v * v).sum::<f64>() / (n * n_channels).max(1) as f64;
    let norm = if power > 0.0 { spec.level / power.sqrt() } else { 0.0 };
    beds.into_iter()
        .map(|b| b.iter().zip(&h).map(|(v, h)| norm * v + h).collect())
        .collect()
}

/// Robot self-noise: wobbling motor hum, band-limited motor noise and sparse
/// clicks, one signal on every channel up to a small gain difference.
pub fn robot_bed<R: Rng>(rng: &mut R, n_channels: usize, n: usize, fs: u32, spec: &RobotNoise) -> Vec<Vec<f64>> {
    let fsf = fs as f64;
    let wobble_hz = rng.gen_range(0.1..0.4);
    let wobble_phase = rng.gen_range(0.0..2.0 * PI);
    let mut phase = 0.0;
    let mut motor = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fsf;
        let f = spec.hum_hz * (1.0 + 0.05 * (2.0 * PI * wobble_hz * t + wobble_phase).sin());
        phase += 2.0 * PI * f / fsf;
        motor.push(spec.hum_level * (phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin()));
    }
    let broadband = colored(rng, n, fsf, 0.5, 100.0, 3000.0);
    let mut clicks = vec![0.0; n];
    if spec.click_rate_hz > 0.0 {
        let mut t = -(1.0 - rng.gen::<f64>()).ln() / spec.click_rate_hz;
        while t < n as f64 / fsf {
            let start = (t * fsf) as usize;
            let len = (0.003 * fsf) as usize;
            let amp = spec.click_level * rng.gen_range(0.5..1.0);
            for k in 0..len {
                if start + k < n {
                    let g: f64 = StandardNormal.sample(rng);
                    clicks[start + k] += amp * g * (-(k as f64) / (len as f64 / 4.0)).exp();
                }
            }
            t += -(1.0 - rng.gen::<f64>()).ln() / spec.click_rate_hz;
        }
    }
    let gains: Vec<f64> = (0..n_channels)
        .map(|_| 1.0 + rng.gen_range(-spec.gain_spread..=spec.gain_spread))
        .collect();
    gains
        .iter()
        .map(|g| {
            (0..n)
                .map(|i| g * (motor[i] + spec.broadband_level * broadband[i] + clicks[i]))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use crate::geometry::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn empty_action_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = synth_source(&mut rng, &FootstepModel::default(), Action::Empty, 3.0, SAMPLE_RATE);
        assert!(s.samples.iter().all(|&v| v == 0.0));
        assert!(s.bursts.is_empty());
        assert_eq!(s.samples.len(), 3 * SAMPLE_RATE as usize);
    }

    #[test]
    fn actions_differ_only_by_scale() {
        let m = FootstepModel::default();
        let q = synth_source(&mut ChaCha8Rng::seed_from_u64(2), &m, Action::Quiet, 4.0, SAMPLE_RATE);
        let l = synth_source(&mut ChaCha8Rng::seed_from_u64(2), &m, Action::Loud, 4.0, SAMPLE_RATE);
        let q2 = synth_source(&mut ChaCha8Rng::seed_from_u64(2), &m, Action::Quiet, 4.0, SAMPLE_RATE);
        assert_eq!(q, q2);
        assert_eq!(q.bursts, l.bursts);
        let mut checked = 0;
        for (a, b) in q.samples.iter().zip(&l.samples) {
            if a.abs() > 1e-9 {
                assert!((b / a - 9.0).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn steps_follow_the_configured_cadence() {
        let m = FootstepModel::default();
        let s = synth_source(&mut ChaCha8Rng::seed_from_u64(3), &m, Action::Normal, 20.0, SAMPLE_RATE);
        let fs = SAMPLE_RATE as f64;
        for w in s.bursts.windows(2) {
            let gap = (w[1].start - w[0].start) as f64 / fs;
            assert!((0.45 - 1e-4..=0.6 + 1e-4).contains(&gap), "{gap}");
        }
        for b in &s.bursts[..s.bursts.len() - 1] {
            let len = b.len as f64 / fs;
            assert!((0.02 - 1e-4..=0.04 + 1e-4).contains(&len));
        }
    }

    #[test]
    fn bandpass_removes_out_of_band_tones() {
        let fs = SAMPLE_RATE as f64;
        let x: Vec<f64> = (0..8192)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 500.0 * t).sin() + (2.0 * PI * 6000.0 * t).sin()
            })
            .collect();
        let y = bandpass(&x, fs, 80.0, 2000.0);
        let pure: Vec<f64> = (0..8192).map(|i| (2.0 * PI * 500.0 * i as f64 / fs).sin()).collect();
        let err: Vec<f64> = y.iter().zip(&pure).map(|(a, b)| a - b).collect();
        // Edge leakage aside, the in-band tone survives and the other goes.
        assert!(rms(&err[1000..7000]) < 0.05, "{}", rms(&err[1000..7000]));
    }

    fn impulse_source(n: usize, at: usize) -> SourceSignal {
        let mut samples = vec![0.0; n];
        samples[at] = 1.0;
        samples[at + 1] = 0.5;
        SourceSignal {
            samples,
            bursts: vec![Burst { start: at, len: 2 }],
        }
    }

    #[test]
    fn bisector_source_reaches_front_pair_together() {
        let g = ArrayGeometry::default();
        let robot = RobotTrack::stationary(Pose::default());
        let walker = Trajectory::stationary([2.0, 0.0]);
        let src = impulse_source(4000, 100);
        let out = propagate(&src, &walker, &robot, &g, SAMPLE_RATE, 343.0).unwrap();
        let argmax = |x: &[f64]| {
            x.iter()
                .enumerate()
                .fold((0, 0.0), |b, (i, &v)| if v.abs() > b.1 { (i, v.abs()) } else { b })
                .0
        };
        let (a, b) = g.front_pair;
        assert_eq!(argmax(out.channel(a)), argmax(out.channel(b)));
        assert_eq!(out.channel(a), out.channel(b));
        // Back mics hear it later.
        assert!(argmax(out.channel(g.back_pair.0)) > argmax(out.channel(a)));
    }

    #[test]
    fn amplitude_follows_inverse_distance() {
        let g = ArrayGeometry::default();
        let robot = RobotTrack::stationary(Pose::default());
        let m = FootstepModel::default();
        let src = synth_source(&mut ChaCha8Rng::seed_from_u64(4), &m, Action::Normal, 2.0, SAMPLE_RATE);
        let near = propagate(&src, &Trajectory::stationary([2.5, 0.4]), &robot, &g, SAMPLE_RATE, 343.0).unwrap();
        let far = propagate(&src, &Trajectory::stationary([5.0, 0.8]), &robot, &g, SAMPLE_RATE, 343.0).unwrap();
        for ch in 0..4 {
            let ratio = rms(far.channel(ch)) / rms(near.channel(ch));
            assert!((ratio - 0.5).abs() < 0.05, "ch {ch}: {ratio}");
        }
    }

    #[test]
    fn dynamic_bed_adds_energy() {
        let n = 44100;
        let room = room_bed(&mut ChaCha8Rng::seed_from_u64(5), 4, n, SAMPLE_RATE, &RoomNoise::default());
        let robot = robot_bed(&mut ChaCha8Rng::seed_from_u64(6), 4, n, SAMPLE_RATE, &RobotNoise::default());
        for c in 0..4 {
            let both: Vec<f64> = room[c].iter().zip(&robot[c]).map(|(a, b)| a + b).collect();
            assert!(rms(&both) > rms(&room[c]));
        }
        // Robot noise is one signal up to gain.
        let r = robot[1][1000] / robot[0][1000];
        for i in (0..n).step_by(997) {
            if robot[0][i].abs() > 1e-6 {
                assert!((robot[1][i] / robot[0][i] - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reverb_tail_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src = impulse_source(44100, 10);
        let mut clip = MultiChannelClip::zeros(4, 44100, SAMPLE_RATE);
        let rv = Reverb::default();
        add_reverb(&mut rng, &mut clip, &src, &rv);
        let early = rms(&clip.channel(0)[300..2500]);
        let late = rms(&clip.channel(0)[6000..8200]);
        assert!(early > 4.0 * late, "{early} {late}");
        assert_ne!(clip.channel(0), clip.channel(1));
        let mut off = MultiChannelClip::zeros(4, 44100, SAMPLE_RATE);
        add_reverb(&mut rng, &mut off, &src, &Reverb { enabled: false, ..rv });
        assert!(off.channels().iter().flatten().all(|&v| v == 0.0));
    }
}
