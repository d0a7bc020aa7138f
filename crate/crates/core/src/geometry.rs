//! Microphone array geometry, directivity, the cyclical azimuth codec and
//! angle helpers.
//!
//! Robot frame: x forward, y left, azimuth measured counterclockwise from the
//! forward vector. Panorama pixel 0 is straight ahead.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the equirectangular panorama that azimuth labels are expressed in.
pub const PANORAMA_WIDTH: f64 = 1440.0;
pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarPattern {
    Cardioid,
    Omni,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mic {
    /// Position in meters, robot frame.
    pub position: [f64; 2],
    /// Unit vector the capsule faces.
    pub facing: [f64; 2],
}

/// A microphone pair `(a, b)`; a positive delay means `b` hears the source after `a`.
pub type MicPair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairId {
    Front,
    Back,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mics: Vec<Mic>,
    pub polar_pattern: PolarPattern,
    pub front_pair: MicPair,
    pub back_pair: MicPair,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::square(0.20)
    }
}

impl ArrayGeometry {
    /// Four cardioid capsules on a square centered on the robot origin,
    /// facing outward along the diagonals. Order: front-left, front-right,
    /// back-left, back-right.
    pub fn square(side: f64) -> Self {
        let h = side / 2.0;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mic = |x: f64, y: f64| Mic {
            position: [x * h, y * h],
            facing: [x * s, y * s],
        };
        Self {
            mics: vec![mic(1.0, 1.0), mic(1.0, -1.0), mic(-1.0, 1.0), mic(-1.0, -1.0)],
            polar_pattern: PolarPattern::Cardioid,
            front_pair: (0, 1),
            back_pair: (2, 3),
        }
    }

    pub fn n_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mics.len();
        if n < 2 {
            return Err(Error::GeometryMissing(format!("{n} microphones")));
        }
        for m in &self.mics {
            let norm = m.facing[0].hypot(m.facing[1]);
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::GeometryMissing("facings must be unit vectors".into()));
            }
        }
        for (a, b) in [self.front_pair, self.back_pair] {
            if a >= n || b >= n || a == b {
                return Err(Error::GeometryMissing(format!("bad pair ({a}, {b})")));
            }
        }
        if self.centroid_of(self.front_pair)[0] <= 0.0 || self.centroid_of(self.back_pair)[0] >= 0.0 {
            return Err(Error::GeometryMissing(
                "front pair must sit ahead of the origin and back pair behind it".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: Self = toml::from_str(&text).map_err(|e| Error::GeometryMissing(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("geometry serializes")
    }

    /// Every unordered pair `(i, j)` with `i < j`, in lexicographic order.
    pub fn all_pairs(&self) -> Vec<MicPair> {
        let n = self.n_mics();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    pub fn pair(&self, id: PairId) -> MicPair {
        match id {
            PairId::Front => self.front_pair,
            PairId::Back => self.back_pair,
        }
    }

    pub fn baseline(&self, (a, b): MicPair) -> f64 {
        let pa = self.mics[a].position;
        let pb = self.mics[b].position;
        (pa[0] - pb[0]).hypot(pa[1] - pb[1])
    }

    pub fn max_baseline(&self) -> f64 {
        self.all_pairs()
            .into_iter()
            .map(|p| self.baseline(p))
            .fold(0.0, f64::max)
    }

    fn centroid_of(&self, (a, b): MicPair) -> [f64; 2] {
        let pa = self.mics[a].position;
        let pb = self.mics[b].position;
        [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
    }

    /// Broadside of a pair on the side facing away from the array center, in
    /// degrees `[0, 360)`.
    pub fn broadside_deg(&self, pair: MicPair) -> f64 {
        let (_, n) = self.pair_frame(pair);
        wrap_degrees(n[1].atan2(n[0]).to_degrees())
    }

    /// Unit axis `u` (from `b` toward `a`) and outward broadside normal `n`.
    fn pair_frame(&self, (a, b): MicPair) -> ([f64; 2], [f64; 2]) {
        let pa = self.mics[a].position;
        let pb = self.mics[b].position;
        let d = self.baseline((a, b));
        let u = [(pa[0] - pb[0]) / d, (pa[1] - pb[1]) / d];
        let mut n = [u[1], -u[0]];
        let c = self.centroid_of((a, b));
        let center = self.centroid();
        if (c[0] - center[0]) * n[0] + (c[1] - center[1]) * n[1] < 0.0 {
            n = [-n[0], -n[1]];
        }
        (u, n)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.mics.len() as f64;
        let sx: f64 = self.mics.iter().map(|m| m.position[0]).sum();
        let sy: f64 = self.mics.iter().map(|m| m.position[1]).sum();
        [sx / n, sy / n]
    }

    /// Robot-frame azimuth (degrees) for an angle `alpha_deg` measured from the
    /// pair's broadside toward microphone `a`.
    pub fn pair_angle_to_robot(&self, pair: MicPair, alpha_deg: f64) -> f64 {
        let (u, n) = self.pair_frame(pair);
        let a = alpha_deg.to_radians();
        let v = [n[0] * a.cos() + u[0] * a.sin(), n[1] * a.cos() + u[1] * a.sin()];
        wrap_degrees(v[1].atan2(v[0]).to_degrees())
    }

    /// Directivity gain of microphone `mic` for a source at `source` (robot frame).
    pub fn gain_toward(&self, mic: usize, source: [f64; 2]) -> f64 {
        match self.polar_pattern {
            PolarPattern::Omni => 1.0,
            PolarPattern::Cardioid => {
                let m = &self.mics[mic];
                let dx = source[0] - m.position[0];
                let dy = source[1] - m.position[1];
                let r = dx.hypot(dy);
                if r < 1e-12 {
                    return 1.0;
                }
                let cos_phi = (dx * m.facing[0] + dy * m.facing[1]) / r;
                0.5 * (1.0 + cos_phi.clamp(-1.0, 1.0))
            }
        }
    }

    /// Stable 64-bit fingerprint of the geometry (FNV-1a over the raw values).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for m in &self.mics {
            for v in m.position.iter().chain(m.facing.iter()) {
                eat(&v.to_le_bytes());
            }
        }
        eat(&[self.polar_pattern as u8]);
        for (a, b) in [self.front_pair, self.back_pair] {
            eat(&(a as u64).to_le_bytes());
            eat(&(b as u64).to_le_bytes());
        }
        h
    }
}

/// Wraps an angle into `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Cyclical features `(sin 2πx/W, cos 2πx/W)` of a panorama pixel.
pub fn encode_cyclic(x: f64, width: f64) -> Result<(f64, f64)> {
    if !(0.0..width).contains(&x) {
        return Err(Error::OutOfRange {
            value: x,
            min: 0.0,
            max: width,
        });
    }
    let phase = 2.0 * PI * x / width;
    Ok((phase.sin(), phase.cos()))
}

/// Inverse of [`encode_cyclic`] for (possibly unnormalized) predictions.
/// Both inputs are clamped to `[-1, 1]` first.
pub fn decode_cyclic(sin: f64, cos: f64, width: f64) -> Result<f64> {
    let s = sin.clamp(-1.0, 1.0);
    let c = cos.clamp(-1.0, 1.0);
    if s.abs() < 1e-9 && c.abs() < 1e-9 {
        return Err(Error::DegenerateDirection);
    }
    let x = s.atan2(c) * width / (2.0 * PI);
    let x = if x < 0.0 { x + width } else { x };
    Ok(if x >= width { 0.0 } else { x })
}

/// Absolute angular difference on the circle, in `[0, 180]`.
pub fn circular_error(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Circular distance between two panorama pixels.
pub fn circular_pixel_error(a: f64, b: f64, width: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(width);
    d.min(width - d)
}

/// Direction of arrival relative to a pair's broadside for a delay `tau_s`.
pub fn tdoa_to_angle(tau_s: f64, baseline_m: f64, c: f64) -> f64 {
    assert!(baseline_m > 0.0, "baseline must be positive");
    (c * tau_s / baseline_m).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Standard cardioid response for an off-axis angle in radians.
pub fn cardioid_gain(phi: f64) -> f64 {
    0.5 * (1.0 + phi.cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading of the forward vector, radians counterclockwise from world +x.
    pub heading: f64,
}

impl Pose {
    /// World coordinates of a robot-frame point.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Robot-frame coordinates of a world point.
    pub fn to_robot(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// Azimuth of a world position seen from the robot, degrees `[0, 360)`.
pub fn world_to_robot_azimuth(person: [f64; 2], pose: &Pose) -> Result<f64> {
    let rel = pose.to_robot(person);
    if rel[0].hypot(rel[1]) < 1e-9 {
        return Err(Error::CoincidentPosition);
    }
    Ok(wrap_degrees(rel[1].atan2(rel[0]).to_degrees()))
}

pub fn robot_azimuth_to_pixel(theta_deg: f64) -> f64 {
    let x = wrap_degrees(theta_deg) * PANORAMA_WIDTH / 360.0;
    if x >= PANORAMA_WIDTH {
        0.0
    } else {
        x
    }
}

pub fn pixel_to_degrees(x: f64) -> f64 {
    x * 360.0 / PANORAMA_WIDTH
}
