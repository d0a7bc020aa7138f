//! Classical direction-of-arrival baselines: GCC-PHAT delay estimation,
//! oracle pair selection and the constant-front predictor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::audio::MultiChannelClip;
use crate::error::{Error, Result};
use crate::geometry::{circular_error, tdoa_to_angle, ArrayGeometry, MicPair, PairId, SPEED_OF_SOUND};

/// PHAT regularizer added to the cross-spectrum magnitude.
pub const PHAT_EPS: f64 = 1e-12;
/// Peaks below this multiple of the curve's median magnitude are low-confidence.
pub const CONFIDENCE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GccResult {
    /// Delay of `b` relative to `a`, in fractional samples.
    pub delay: f64,
    /// Correlation at lags `-max_lag..=max_lag`.
    pub curve: Vec<f64>,
    pub peak_value: f64,
}

impl GccResult {
    pub fn max_lag(&self) -> usize {
        self.curve.len() / 2
    }

    /// Peak height relative to the median absolute curve value.
    pub fn peak_ratio(&self) -> f64 {
        let mut mags: Vec<f64> = self.curve.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| a.total_cmp(b));
        let median = mags[mags.len() / 2];
        if median > 0.0 {
            self.peak_value / median
        } else {
            f64::INFINITY
        }
    }
}

/// Smallest 7-smooth length at or above `n`.
pub fn smooth_fft_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Plans {
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

/// Caches FFT plans by length. Cheap to clone and safe to share.
#[derive(Clone, Default)]
pub struct GccPhat {
    plans: Arc<Mutex<HashMap<usize, Arc<Plans>>>>,
}

impl std::fmt::Debug for GccPhat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GccPhat")
    }
}

/// Spectrum of one zero-padded channel, ready for pairing.
#[derive(Debug, Clone)]
pub struct ChannelSpectrum {
    fft_len: usize,
    bins: Vec<Complex<f64>>,
    silent: bool,
}

impl GccPhat {
    pub fn new() -> Self {
        Self::default()
    }

    fn plans(&self, n: usize) -> Arc<Plans> {
        let mut map = self.plans.lock().expect("plan cache poisoned");
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = RealFftPlanner::<f64>::new();
                Arc::new(Plans {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    /// FFT length that makes circular correlation linear for `|lag| <= max_lag`.
    pub fn fft_len_for(len: usize, max_lag: usize) -> usize {
        smooth_fft_len(len + max_lag + 1)
    }

    pub fn spectrum(&self, signal: &[f64], fft_len: usize) -> ChannelSpectrum {
        let plans = self.plans(fft_len);
        let mut input = plans.forward.make_input_vec();
        input[..signal.len()].copy_from_slice(signal);
        let mut bins = plans.forward.make_output_vec();
        plans
            .forward
            .process(&mut input, &mut bins)
            .expect("fft sizes match");
        ChannelSpectrum {
            fft_len,
            bins,
            silent: signal.iter().all(|&v| v == 0.0),
        }
    }

    /// PHAT-weighted cross-correlation of two prepared spectra.
    pub fn correlate(&self, a: &ChannelSpectrum, b: &ChannelSpectrum, max_lag: usize) -> Result<GccResult> {
        if a.fft_len != b.fft_len {
            return Err(Error::LengthMismatch("spectra have different FFT lengths".into()));
        }
        if a.silent || b.silent {
            return Err(Error::DegenerateSignal);
        }
        let n = a.fft_len;
        let plans = self.plans(n);
        let mut cross: Vec<Complex<f64>> = a
            .bins
            .iter()
            .zip(&b.bins)
            .map(|(x, y)| {
                let g = x.conj() * y;
                g / (g.norm() + PHAT_EPS)
            })
            .collect();
        let last = cross.len() - 1;
        cross[0].im = 0.0;
        if n % 2 == 0 {
            cross[last].im = 0.0;
        }
        let mut out = plans.inverse.make_output_vec();
        plans
            .inverse
            .process(&mut cross, &mut out)
            .expect("fft sizes match");
        let scale = 1.0 / n as f64;
        let l = max_lag as isize;
        let curve: Vec<f64> = (-l..=l)
            .map(|lag| out[lag.rem_euclid(n as isize) as usize] * scale)
            .collect();
        Ok(peak_of(curve))
    }

    /// GCC-PHAT delay of `sig_b` relative to `sig_a`.
    pub fn gcc_phat(&self, sig_a: &[f64], sig_b: &[f64], max_lag: usize) -> Result<GccResult> {
        if sig_a.len() != sig_b.len() {
            return Err(Error::LengthMismatch(format!("{} vs {}", sig_a.len(), sig_b.len())));
        }
        if sig_a.len() < 4 * max_lag || max_lag == 0 {
            return Err(Error::LengthMismatch(format!(
                "signal of {} samples too short for max_lag {max_lag}",
                sig_a.len()
            )));
        }
        let n = Self::fft_len_for(sig_a.len(), max_lag);
        let a = self.spectrum(sig_a, n);
        let b = self.spectrum(sig_b, n);
        self.correlate(&a, &b, max_lag)
    }
}

/// Free-function form of [`GccPhat::gcc_phat`].
pub fn gcc_phat(sig_a: &[f64], sig_b: &[f64], max_lag: usize) -> Result<GccResult> {
    GccPhat::new().gcc_phat(sig_a, sig_b, max_lag)
}

fn peak_of(curve: Vec<f64>) -> GccResult {
    let max_lag = curve.len() / 2;
    let (idx, peak) = curve
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let mut delay = idx as f64 - max_lag as f64;
    if idx > 0 && idx + 1 < curve.len() {
        let (ym, y0, yp) = (curve[idx - 1], curve[idx], curve[idx + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            delay += (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
        }
    }
    GccResult {
        delay: delay.clamp(-(max_lag as f64), max_lag as f64),
        curve,
        peak_value: peak,
    }
}

/// Largest physically possible lag plus a two-sample margin.
pub fn default_max_lag(geometry: &ArrayGeometry, sample_rate: u32) -> usize {
    (sample_rate as f64 * geometry.max_baseline() / SPEED_OF_SOUND).ceil() as usize + 2
}

/// Picks the front pair when the true azimuth is within 90° of straight ahead.
pub fn oracle_pair(true_theta_deg: Option<f64>) -> Result<PairId> {
    let theta = true_theta_deg.ok_or(Error::MissingLabel)?;
    Ok(if circular_error(theta, 0.0) <= 90.0 {
        PairId::Front
    } else {
        PairId::Back
    })
}

/// Broadside direction of the selected pair in the robot frame.
pub fn constant_front(geometry: &ArrayGeometry, pair: PairId) -> f64 {
    geometry.broadside_deg(geometry.pair(pair))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePrediction {
    pub angle_deg: f64,
    pub pair: PairId,
    pub gcc: GccResult,
    pub low_confidence: bool,
}

/// Oracle pair, GCC-PHAT on that pair, then delay to robot-frame azimuth.
pub fn baseline_predict(
    engine: &GccPhat,
    clip: &MultiChannelClip,
    geometry: &ArrayGeometry,
    true_theta_deg: Option<f64>,
) -> Result<BaselinePrediction> {
    if clip.n_channels() != geometry.n_mics() {
        return Err(Error::ChannelCountMismatch {
            expected: geometry.n_mics(),
            found: clip.n_channels(),
        });
    }
    let pair_id = oracle_pair(true_theta_deg)?;
    let pair: MicPair = geometry.pair(pair_id);
    let max_lag = default_max_lag(geometry, clip.sample_rate());
    let gcc = engine.gcc_phat(clip.channel(pair.0), clip.channel(pair.1), max_lag)?;
    let tau = gcc.delay / clip.sample_rate() as f64;
    let alpha = tdoa_to_angle(tau, geometry.baseline(pair), SPEED_OF_SOUND);
    let angle_deg = geometry.pair_angle_to_robot(pair, alpha);
    let low_confidence = gcc.peak_ratio() < CONFIDENCE_RATIO;
    Ok(BaselinePrediction {
        angle_deg,
        pair: pair_id,
        gcc,
        low_confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// `b[n] = a[n - d]`, zero-filled.
    fn shifted(a: &[f64], d: isize) -> Vec<f64> {
        (0..a.len() as isize)
            .map(|n| {
                let j = n - d;
                if j >= 0 && (j as usize) < a.len() {
                    a[j as usize]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Brute-force normalized cross-correlation argmax over integer lags.
    fn brute_force_lag(a: &[f64], b: &[f64], max_lag: isize) -> isize {
        let norm = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
        (-max_lag..=max_lag)
            .map(|k| {
                let s: f64 = (0..a.len() as isize)
                    .filter(|&n| n + k >= 0 && ((n + k) as usize) < b.len())
                    .map(|n| a[n as usize] * b[(n + k) as usize])
                    .sum();
                (k, s / norm)
            })
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
            .0
    }

    #[test]
    fn recovers_positive_shift() {
        let a = white(1, 8192);
        let b = shifted(&a, 5);
        assert_eq!(brute_force_lag(&a, &b, 40), 5);
        let g = gcc_phat(&a, &b, 40).unwrap();
        assert!((g.delay - 5.0).abs() < 0.25, "delay {}", g.delay);
        assert_eq!(g.curve.len(), 81);
    }

    #[test]
    fn self_alignment_peaks_at_zero() {
        let a = white(2, 4096);
        let g = gcc_phat(&a, &a, 20).unwrap();
        assert!(g.delay.abs() < 1e-9);
        assert_eq!(g.peak_value, g.curve[20]);
        assert!(g.curve.iter().all(|&v| v <= g.peak_value));
    }

    #[test]
    fn coherent_peaks_stand_out_from_independent_noise() {
        let mut noise_ratios = Vec::new();
        for seed in 0..50 {
            let g = gcc_phat(&white(1000 + seed, 4096), &white(5000 + seed, 4096), 40).unwrap();
            noise_ratios.push(g.peak_value.abs() / median_abs(&g.curve));
            let a = white(9000 + seed, 4096);
            let c = gcc_phat(&a, &shifted(&a, (seed % 21) as isize - 10), 40).unwrap();
            assert!(c.peak_value / median_abs(&c.curve) > 10.0 * CONFIDENCE_RATIO);
        }
        noise_ratios.sort_by(|a, b| a.total_cmp(b));
        assert!(noise_ratios[25] < 2.0 * CONFIDENCE_RATIO, "{:?}", noise_ratios[25]);
    }

    fn median_abs(v: &[f64]) -> f64 {
        let mut m: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        m.sort_by(|a, b| a.total_cmp(b));
        m[m.len() / 2]
    }

    #[test]
    fn error_paths() {
        let a = white(3, 1000);
        assert!(matches!(gcc_phat(&a, &a[..999], 10), Err(Error::LengthMismatch(_))));
        assert!(matches!(gcc_phat(&a, &vec![0.0; 1000], 10), Err(Error::DegenerateSignal)));
        assert!(gcc_phat(&a, &a, 300).is_err());
    }

    #[test]
    fn oracle_and_constant_front() {
        let g = ArrayGeometry::default();
        assert_eq!(oracle_pair(Some(10.0)).unwrap(), PairId::Front);
        assert_eq!(oracle_pair(Some(180.0)).unwrap(), PairId::Back);
        assert_eq!(oracle_pair(Some(90.0)).unwrap(), PairId::Front);
        assert_eq!(oracle_pair(Some(270.0)).unwrap(), PairId::Front);
        assert!(matches!(oracle_pair(None), Err(Error::MissingLabel)));
        assert_eq!(constant_front(&g, PairId::Front), 0.0);
        assert!((constant_front(&g, PairId::Back) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn constant_front_expectation_is_45_degrees() {
        // Closed form: E|U(-90, 90)| = 45. Check against a fine sweep of true angles.
        let g = ArrayGeometry::default();
        let n = 36_000;
        let total: f64 = (0..n)
            .map(|i| {
                let theta = (i as f64 + 0.5) * 360.0 / n as f64;
                let pair = oracle_pair(Some(theta)).unwrap();
                circular_error(constant_front(&g, pair), theta)
            })
            .sum();
        assert!((total / n as f64 - 45.0).abs() < 1e-6);
    }

    #[test]
    fn default_lag_covers_diagonal() {
        let g = ArrayGeometry::default();
        // 0.2828 m * 44100 / 343 = 36.4 samples.
        assert_eq!(default_max_lag(&g, SAMPLE_RATE), 39);
    }

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_fft_len(1024), 1024);
        assert_eq!(smooth_fft_len(11), 12);
        let n = smooth_fft_len(44_141);
        assert!(n >= 44_141);
        let mut r = n;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        assert_eq!(r, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn antisymmetric_and_scale_invariant(seed in 0u64..1000, d in -30isize..30, k in 0.001f64..1000.0) {
            let a = white(seed, 2048);
            let b = shifted(&a, d);
            let ab = gcc_phat(&a, &b, 32).unwrap();
            let ba = gcc_phat(&b, &a, 32).unwrap();
            prop_assert!((ab.delay + ba.delay).abs() < 1e-9);
            prop_assert_eq!(ab.delay.round() as isize, d);
            let scaled: Vec<f64> = b.iter().map(|v| v * k).collect();
            let sc = gcc_phat(&a, &scaled, 32).unwrap();
            let argmax = |g: &GccResult| g.curve.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
            prop_assert_eq!(argmax(&ab), argmax(&sc));
        }
    }
}
