//! Central finite-difference verification of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{CachedFeatures, ENERGY_LEN, GCC_LEN, WEIGHT_GRID};
use super::model::{DetectorModel, LossWeights, ParamGroup, Target};
use super::train::assemble;
use crate::error::Result;
use crate::geometry::PANORAMA_WIDTH;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error.
const REL_FLOOR: f64 = 1e-7;
const MAX_REDRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub group: ParamGroup,
    /// Index into the flat parameter vector.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_error: f64,
    /// Set when the subtraction weight sat on a table knot and the check was
    /// moved to the middle of its segment.
    pub backsub_moved: Option<(f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn loss_and_signature(
    model: &DetectorModel,
    feats: &[&CachedFeatures],
    targets: &[Target],
    weights: LossWeights,
) -> Result<(f64, Vec<bool>)> {
    let (x, _) = assemble(feats, model.w_backsub);
    let cache = model.forward_batch(x.view())?;
    let (loss, _) = model.loss(&cache, targets, weights)?;
    let mut sig = cache.signature();
    sig.extend((0..WEIGHT_GRID - 1).map(|g| g == CachedFeatures::segment_of(model.w_backsub)));
    for (p, t) in model.predictions(&cache).iter().zip(targets) {
        if let Some(x) = t.pixel {
            let mut e = (p.pixel - x).rem_euclid(model.width);
            if e > model.width / 2.0 {
                e -= model.width;
            }
            sig.push(e > 0.0);
        }
    }
    Ok((loss.total, sig))
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Checks `n_probes` parameters spread over every group, always including
/// the subtraction weight. Probes whose ±h neighborhood crosses a kink
/// (ReLU, clamp, L1 sign, table knot) are redrawn.
pub fn gradient_check(
    model: &DetectorModel,
    feats: &[&CachedFeatures],
    targets: &[Target],
    weights: LossWeights,
    n_probes: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut model = model.clone();
    let mut backsub_moved = None;
    let w = model.w_backsub;
    if CachedFeatures::segment_of(w - STEP) != CachedFeatures::segment_of(w + STEP) || w - STEP < 0.0 || w + STEP > 1.0 {
        let steps = (WEIGHT_GRID - 1) as f64;
        let seg = CachedFeatures::segment_of(w) as f64;
        let moved = (seg + 0.5) / steps;
        model.w_backsub = moved;
        backsub_moved = Some((w, moved));
    }
    let (x, slope) = assemble(feats, model.w_backsub);
    let cache = model.forward_batch(x.view())?;
    let (_, d_out) = model.loss(&cache, targets, weights)?;
    let analytic = model.backward(&cache, &d_out, slope.view()).flat();
    let (_, base_sig) = loss_and_signature(&model, feats, targets, weights)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(n_probes);
    let groups = ParamGroup::ALL;
    for p in 0..n_probes {
        let group = groups[p % groups.len()];
        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let index = group.offset() + rng.gen_range(0..group.len());
            if group != ParamGroup::Backsub && analytic[index] == 0.0 {
                continue;
            }
            let mut up = model.clone();
            up.nudge(index, STEP);
            let (l_up, s_up) = loss_and_signature(&up, feats, targets, weights)?;
            let mut dn = model.clone();
            dn.nudge(index, -STEP);
            let (l_dn, s_dn) = loss_and_signature(&dn, feats, targets, weights)?;
            if s_up != base_sig || s_dn != base_sig {
                continue;
            }
            let numeric = (l_up - l_dn) / (2.0 * STEP);
            accepted = Some(Probe {
                group,
                index,
                analytic: analytic[index],
                numeric,
                rel_error: rel_error(analytic[index], numeric),
            });
            break;
        }
        if let Some(probe) = accepted {
            probes.push(probe);
        }
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        probes,
        max_rel_error,
        backsub_moved,
    })
}

/// Seeded stand-in batch for checking a model without audio: random GCC
/// curves, energy tables that fall with the subtraction weight, and a mix
/// of present and empty targets.
pub fn synthetic_batch(seed: u64, n: usize) -> (Vec<CachedFeatures>, Vec<Target>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feats = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let gcc: Vec<f32> = (0..GCC_LEN).map(|_| rng.gen_range(-0.3..1.0)).collect();
        let mut table = vec![0f32; WEIGHT_GRID * ENERGY_LEN];
        for c in 0..ENERGY_LEN {
            let s: f64 = rng.gen_range(0.2..0.9);
            let e: f64 = rng.gen_range(0.0..0.6);
            for g in 0..WEIGHT_GRID {
                let w = g as f64 / (WEIGHT_GRID - 1) as f64;
                table[g * ENERGY_LEN + c] = (s - w * e).clamp(0.0, 1.0) as f32;
            }
        }
        feats.push(CachedFeatures::from_parts(gcc, table).expect("dimensions fixed"));
        targets.push(if i % 4 == 0 {
            Target::empty()
        } else {
            Target {
                presence: true,
                pixel: Some(rng.gen_range(0.0..PANORAMA_WIDTH)),
                near: Some(rng.gen()),
            }
        });
    }
    (feats, targets)
}

/// Total-loss difference when only the angle and distance heads move.
pub fn masked_head_delta(
    model: &DetectorModel,
    feats: &[&CachedFeatures],
    targets: &[Target],
    weights: LossWeights,
    delta: f64,
) -> Result<f64> {
    use super::model::{HEAD_COS, HEAD_DISTANCE, HEAD_SIN, N_HEADS};
    let (x, _) = assemble(feats, model.w_backsub);
    let base = model.loss(&model.forward_batch(x.view())?, targets, weights)?.0.total;
    let mut moved = model.clone();
    let mut bump = Array2::zeros(moved.w3.raw_dim());
    for r in 0..moved.w3.nrows() {
        for h in [HEAD_SIN, HEAD_COS, HEAD_DISTANCE] {
            bump[[r, h]] = delta * (1.0 + r as f64 / 64.0);
        }
    }
    moved.w3 += &bump;
    for h in 0..N_HEADS {
        if h != super::model::HEAD_PRESENCE {
            moved.b3[h] += delta;
        }
    }
    let after = moved.loss(&moved.forward_batch(x.view())?, targets, weights)?.0.total;
    Ok(after - base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::model::INITIAL_BACKSUB;
    use ndarray::Array1;

    fn model(seed: u64, feats: &[CachedFeatures]) -> DetectorModel {
        let rows: Vec<&CachedFeatures> = feats.iter().collect();
        let (x, _) = assemble(&rows, INITIAL_BACKSUB);
        let mean: Array1<f64> = x.mean_axis(ndarray::Axis(0)).unwrap();
        let std = x.std_axis(ndarray::Axis(0), 0.0);
        DetectorModel::new(seed, mean, std).unwrap()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (feats, targets) = synthetic_batch(1, 8);
        let refs: Vec<&CachedFeatures> = feats.iter().collect();
        let m = model(2, &feats);
        for weights in [
            LossWeights::default(),
            LossWeights {
                angle: 1.0 / PANORAMA_WIDTH,
                distance: 0.0,
                presence: 0.0,
            },
            LossWeights {
                angle: 0.0,
                distance: 1.0,
                presence: 1.0,
            },
        ] {
            let r = gradient_check(&m, &refs, &targets, weights, 20, 3).unwrap();
            assert_eq!(r.probes.len(), 20);
            assert!(r.probes.iter().any(|p| p.group == ParamGroup::Backsub));
            assert!(r.passed(), "{weights:?}: {:#?}", r.probes);
        }
    }

    #[test]
    fn knot_start_is_moved_off_the_kink() {
        let (feats, targets) = synthetic_batch(4, 4);
        let refs: Vec<&CachedFeatures> = feats.iter().collect();
        let m = model(5, &feats);
        assert_eq!(m.w_backsub, 0.5);
        let r = gradient_check(&m, &refs, &targets, LossWeights::default(), 7, 6).unwrap();
        assert_eq!(r.backsub_moved, Some((0.5, 0.55)));
    }

    #[test]
    fn empty_samples_ignore_angle_and_distance_heads() {
        let (feats, _) = synthetic_batch(7, 6);
        let refs: Vec<&CachedFeatures> = feats.iter().collect();
        let targets = vec![Target::empty(); 6];
        let m = model(8, &feats);
        for delta in [1e-3, 0.5, 10.0] {
            assert_eq!(masked_head_delta(&m, &refs, &targets, LossWeights::default(), delta).unwrap(), 0.0);
        }
        let mut mixed = targets.clone();
        mixed[0] = Target {
            presence: true,
            pixel: Some(100.0),
            near: Some(true),
        };
        assert_ne!(masked_head_delta(&m, &refs, &mixed, LossWeights::default(), 0.5).unwrap(), 0.0);
    }
}
