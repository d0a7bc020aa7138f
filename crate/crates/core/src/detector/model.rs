//! MLP encoder with four linear heads, multi-task loss and its analytic
//! backward pass.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::{ENERGY_LEN, FEATURE_LEN, GCC_LEN};
use crate::error::{Error, Result};
use crate::geometry::{circular_pixel_error, decode_cyclic, pixel_to_degrees, PANORAMA_WIDTH};

pub const HIDDEN1: usize = 256;
pub const HIDDEN2: usize = 128;
pub const N_HEADS: usize = 4;
pub const HEAD_SIN: usize = 0;
pub const HEAD_COS: usize = 1;
pub const HEAD_DISTANCE: usize = 2;
pub const HEAD_PRESENCE: usize = 3;
pub const DEFAULT_DISTANCE_THRESHOLD_M: f64 = 1.7;
pub const INITIAL_BACKSUB: f64 = 0.5;
const MIN_SCALE: f64 = 1e-4;

/// Relative weights of the three task losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub angle: f64,
    pub distance: f64,
    pub presence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            angle: 1.0 / PANORAMA_WIDTH,
            distance: 1.0,
            presence: 1.0,
        }
    }
}

/// Supervision for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub presence: bool,
    /// Panorama pixel of the person; required when present.
    pub pixel: Option<f64>,
    /// `r <= threshold`; `None` when the distance is unknown.
    pub near: Option<bool>,
}

impl Target {
    pub fn empty() -> Self {
        Self {
            presence: false,
            pixel: None,
            near: None,
        }
    }

    pub fn validate(&self, width: f64) -> Result<()> {
        match (self.presence, self.pixel) {
            (true, None) => Err(Error::MalformedLabel("present sample without azimuth".into())),
            (true, Some(x)) if !(0.0..width).contains(&x) => {
                Err(Error::MalformedLabel(format!("pixel {x} outside [0, {width})")))
            }
            (false, Some(_)) => Err(Error::MalformedLabel("empty sample with azimuth".into())),
            _ if !self.presence && self.near.is_some() => {
                Err(Error::MalformedLabel("empty sample with distance".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictions {
    pub sin_raw: f64,
    pub cos_raw: f64,
    pub sin: f64,
    pub cos: f64,
    /// Decoded pixel in `[0, W)`; 0 when both components vanish.
    pub pixel: f64,
    pub distance_prob: f64,
    pub presence_prob: f64,
}

impl Predictions {
    fn from_outputs(o: &[f64], width: f64) -> Self {
        let sin = o[HEAD_SIN].clamp(-1.0, 1.0);
        let cos = o[HEAD_COS].clamp(-1.0, 1.0);
        Self {
            sin_raw: o[HEAD_SIN],
            cos_raw: o[HEAD_COS],
            sin,
            cos,
            pixel: decode_cyclic(sin, cos, width).unwrap_or(0.0),
            distance_prob: sigmoid(o[HEAD_DISTANCE]),
            presence_prob: sigmoid(o[HEAD_PRESENCE]),
        }
    }

    pub fn angle_deg(&self) -> f64 {
        pixel_to_degrees(self.pixel)
    }

    pub fn near(&self) -> bool {
        self.distance_prob > 0.5
    }

    pub fn present(&self) -> bool {
        self.presence_prob > 0.5
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]`, computed without overflow.
pub fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

/// Per-task mean losses over a batch. Masked tasks divide by the batch size,
/// so an empty sample contributes exactly zero to them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub angle: f64,
    pub distance: f64,
    pub presence: f64,
}

/// Trainable parameters plus the fixed input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub w_backsub: f64,
    pub input_mean: Array1<f64>,
    pub input_scale: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub distance_threshold: f64,
    pub width: f64,
    pub geometry_hash: u64,
}

/// Parameter groups, in flat-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backsub,
    W1,
    B1,
    W2,
    B2,
    W3,
    B3,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Backsub,
        ParamGroup::W1,
        ParamGroup::B1,
        ParamGroup::W2,
        ParamGroup::B2,
        ParamGroup::W3,
        ParamGroup::B3,
    ];

    pub fn len(self) -> usize {
        match self {
            ParamGroup::Backsub => 1,
            ParamGroup::W1 => FEATURE_LEN * HIDDEN1,
            ParamGroup::B1 => HIDDEN1,
            ParamGroup::W2 => HIDDEN1 * HIDDEN2,
            ParamGroup::B2 => HIDDEN2,
            ParamGroup::W3 => HIDDEN2 * N_HEADS,
            ParamGroup::B3 => N_HEADS,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Offset of the group inside the flat parameter vector.
    pub fn offset(self) -> usize {
        Self::ALL.iter().take_while(|&&g| g != self).map(|g| g.len()).sum()
    }
}

pub const N_PARAMS: usize = 1
    + FEATURE_LEN * HIDDEN1
    + HIDDEN1
    + HIDDEN1 * HIDDEN2
    + HIDDEN2
    + HIDDEN2 * N_HEADS
    + N_HEADS;

/// Gradient of the batch loss, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_backsub: f64,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(N_PARAMS);
        v.push(self.w_backsub);
        for a in [self.w1.view(), self.w2.view(), self.w3.view()].into_iter().zip([&self.b1, &self.b2, &self.b3]) {
            v.extend(a.0.iter());
            v.extend(a.1.iter());
        }
        v
    }

    pub fn all_finite(&self) -> bool {
        self.w_backsub.is_finite() && self.flat().iter().all(|v| v.is_finite())
    }
}

/// Saved activations of one batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    z: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    pub outputs: Array2<f64>,
}

impl ForwardCache {
    /// Piecewise-linear regime of every nonlinearity, used to tell whether two
    /// parameter settings sit on the same smooth piece.
    pub fn signature(&self) -> Vec<bool> {
        self.a1
            .iter()
            .chain(self.a2.iter())
            .map(|&v| v > 0.0)
            .chain(self.outputs.column(HEAD_SIN).iter().map(|v| v.abs() < 1.0))
            .chain(self.outputs.column(HEAD_COS).iter().map(|v| v.abs() < 1.0))
            .collect()
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

impl DetectorModel {
    /// Seeded initialization. Hidden layers use He scaling, heads use
    /// `1/sqrt(fan_in)`, biases start at zero.
    pub fn new(seed: u64, input_mean: Array1<f64>, input_scale: Array1<f64>) -> Result<Self> {
        if input_mean.len() != FEATURE_LEN || input_scale.len() != FEATURE_LEN {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_LEN,
                found: input_mean.len().min(input_scale.len()),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize, std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            Array2::from_shape_fn((rows, cols), |_| n.sample(&mut rng))
        };
        let w1 = init(FEATURE_LEN, HIDDEN1, (2.0 / FEATURE_LEN as f64).sqrt());
        let w2 = init(HIDDEN1, HIDDEN2, (2.0 / HIDDEN1 as f64).sqrt());
        let w3 = init(HIDDEN2, N_HEADS, (1.0 / HIDDEN2 as f64).sqrt());
        Ok(Self {
            w_backsub: INITIAL_BACKSUB,
            input_mean,
            input_scale: input_scale.mapv(|v| v.max(MIN_SCALE)),
            w1,
            b1: Array1::zeros(HIDDEN1),
            w2,
            b2: Array1::zeros(HIDDEN2),
            w3,
            b3: Array1::zeros(N_HEADS),
            distance_threshold: DEFAULT_DISTANCE_THRESHOLD_M,
            width: PANORAMA_WIDTH,
            geometry_hash: 0,
        })
    }

    /// All-zero weights with identity standardization.
    pub fn zeros() -> Self {
        Self {
            w_backsub: INITIAL_BACKSUB,
            input_mean: Array1::zeros(FEATURE_LEN),
            input_scale: Array1::ones(FEATURE_LEN),
            w1: Array2::zeros((FEATURE_LEN, HIDDEN1)),
            b1: Array1::zeros(HIDDEN1),
            w2: Array2::zeros((HIDDEN1, HIDDEN2)),
            b2: Array1::zeros(HIDDEN2),
            w3: Array2::zeros((HIDDEN2, N_HEADS)),
            b3: Array1::zeros(N_HEADS),
            distance_threshold: DEFAULT_DISTANCE_THRESHOLD_M,
            width: PANORAMA_WIDTH,
            geometry_hash: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        N_PARAMS
    }

    /// Flat copy of every trainable parameter, in [`ParamGroup`] order.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(N_PARAMS);
        v.push(self.w_backsub);
        v.extend(self.w1.iter());
        v.extend(self.b1.iter());
        v.extend(self.w2.iter());
        v.extend(self.b2.iter());
        v.extend(self.w3.iter());
        v.extend(self.b3.iter());
        v
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            self.b3.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != N_PARAMS {
            return Err(Error::DimensionMismatch {
                expected: N_PARAMS,
                found: flat.len(),
            });
        }
        self.w_backsub = flat[0];
        let mut at = 1;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    pub fn param(&self, index: usize) -> f64 {
        self.params()[index]
    }

    /// Adds `delta` to one flat-indexed parameter.
    pub fn nudge(&mut self, index: usize, delta: f64) {
        if index == 0 {
            self.w_backsub += delta;
            return;
        }
        let mut at = 1;
        for t in self.tensors_mut() {
            if index < at + t.len() {
                t[index - at] += delta;
                return;
            }
            at += t.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Batch forward pass on raw feature rows (`B × FEATURE_LEN`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != FEATURE_LEN {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_LEN,
                found: x.ncols(),
            });
        }
        let z = (&x - &self.input_mean) / &self.input_scale;
        let a1 = z.dot(&self.w1) + &self.b1;
        let h1 = relu(&a1);
        let a2 = h1.dot(&self.w2) + &self.b2;
        let h2 = relu(&a2);
        let outputs = h2.dot(&self.w3) + &self.b3;
        Ok(ForwardCache {
            z,
            a1,
            h1,
            a2,
            h2,
            outputs,
        })
    }

    pub fn predictions(&self, cache: &ForwardCache) -> Vec<Predictions> {
        cache
            .outputs
            .rows()
            .into_iter()
            .map(|r| Predictions::from_outputs(r.as_slice().expect("contiguous"), self.width))
            .collect()
    }

    pub fn forward(&self, features: &[f64]) -> Result<Predictions> {
        let x = ArrayView2::from_shape((1, features.len()), features).map_err(|_| Error::DimensionMismatch {
            expected: FEATURE_LEN,
            found: features.len(),
        })?;
        let cache = self.forward_batch(x)?;
        Ok(self.predictions(&cache)[0])
    }

    /// Batch loss and `dL/d(outputs)`.
    pub fn loss(&self, cache: &ForwardCache, targets: &[Target], weights: LossWeights) -> Result<(LossBreakdown, Array2<f64>)> {
        let b = targets.len();
        if cache.outputs.nrows() != b {
            return Err(Error::DimensionMismatch {
                expected: cache.outputs.nrows(),
                found: b,
            });
        }
        let mut out = LossBreakdown::default();
        let mut d_out = Array2::zeros((b, N_HEADS));
        let inv_b = 1.0 / b as f64;
        let k = self.width / (2.0 * PI);
        for (i, t) in targets.iter().enumerate() {
            t.validate(self.width)?;
            let o = cache.outputs.row(i);
            let zp = o[HEAD_PRESENCE];
            out.presence += bce_with_logit(zp, t.presence) * inv_b;
            d_out[[i, HEAD_PRESENCE]] = weights.presence * (sigmoid(zp) - t.presence as u8 as f64) * inv_b;
            if !t.presence {
                continue;
            }
            if let Some(near) = t.near {
                let zd = o[HEAD_DISTANCE];
                out.distance += bce_with_logit(zd, near) * inv_b;
                d_out[[i, HEAD_DISTANCE]] = weights.distance * (sigmoid(zd) - near as u8 as f64) * inv_b;
            }
            let x = t.pixel.expect("validated");
            let pred = Predictions::from_outputs(o.as_slice().expect("contiguous"), self.width);
            out.angle += circular_pixel_error(pred.pixel, x, self.width) * inv_b;
            let (s, c) = (pred.sin, pred.cos);
            let r2 = s * s + c * c;
            if r2 < 1e-18 {
                continue;
            }
            // Signed wrapped residual; its sign is dL/dx̂.
            let mut e = (pred.pixel - x).rem_euclid(self.width);
            if e > self.width / 2.0 {
                e -= self.width;
            }
            let sign = if e > 0.0 {
                1.0
            } else if e < 0.0 {
                -1.0
            } else {
                0.0
            };
            let g = weights.angle * sign * k * inv_b / r2;
            if o[HEAD_SIN].abs() < 1.0 {
                d_out[[i, HEAD_SIN]] = g * c;
            }
            if o[HEAD_COS].abs() < 1.0 {
                d_out[[i, HEAD_COS]] = -g * s;
            }
        }
        out.total = weights.angle * out.angle + weights.distance * out.distance + weights.presence * out.presence;
        Ok((out, d_out))
    }

    /// Backpropagates `d_out`. `slope` holds `d(energy features)/d w_backsub`
    /// per row (`B × ENERGY_LEN`).
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>, slope: ArrayView2<f64>) -> Gradients {
        let b3 = d_out.sum_axis(Axis(0));
        let w3 = cache.h2.t().dot(d_out);
        let mut d_a2 = d_out.dot(&self.w3.t());
        d_a2.zip_mut_with(&cache.a2, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let b2 = d_a2.sum_axis(Axis(0));
        let w2 = cache.h1.t().dot(&d_a2);
        let mut d_a1 = d_a2.dot(&self.w2.t());
        d_a1.zip_mut_with(&cache.a1, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let b1 = d_a1.sum_axis(Axis(0));
        let w1 = cache.z.t().dot(&d_a1);
        // Only the energy block depends on w_backsub.
        let w1_energy = self.w1.slice(s![GCC_LEN.., ..]);
        let d_z = d_a1.dot(&w1_energy.t());
        let scale = self.input_scale.slice(s![GCC_LEN..]);
        let mut w_backsub = 0.0;
        for (row_g, row_s) in d_z.rows().into_iter().zip(slope.rows()) {
            for ((g, sl), sc) in row_g.iter().zip(row_s.iter()).zip(scale.iter()) {
                w_backsub += g * sl / sc;
            }
        }
        debug_assert_eq!(slope.ncols(), ENERGY_LEN);
        Gradients {
            w_backsub,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }
}
