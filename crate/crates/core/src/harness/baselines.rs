//! Classical reference rows: GCC-PHAT on the oracle pair, the constant-front
//! guess, and the uniform-random expectation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::metrics::{MetricsTable, Outcome};
use crate::audio::{offset_to_index, read_recording, ReadOptions};
use crate::doa::{baseline_predict, constant_front, oracle_pair, GccPhat};
use crate::error::Result;
use crate::geometry::{pixel_to_degrees, ArrayGeometry};
use crate::manifest::Manifest;
use crate::spectro::CLIP_SAMPLES;

pub const GCC_METHOD: &str = "gcc-phat";
pub const FRONT_METHOD: &str = "constant-front";
pub const UNIFORM_METHOD: &str = "uniform-360";
/// Expected circular error of a uniformly random guess.
pub const UNIFORM_MAE_DEG: f64 = 90.0;

/// Baseline rows, each averaged over rooms the same way as the detector's folds.
pub fn evaluate_baselines(manifest: &Manifest, geometry: &ArrayGeometry) -> Result<Vec<MetricsTable>> {
    geometry.validate()?;
    let engine = GccPhat::new();
    let mut by_path: BTreeMap<&PathBuf, Vec<usize>> = BTreeMap::new();
    for (i, s) in manifest.samples.iter().enumerate() {
        s.validate()?;
        if s.presence {
            by_path.entry(&s.clip.path).or_default().push(i);
        }
    }
    let mut gcc: BTreeMap<String, Vec<Outcome>> = BTreeMap::new();
    let mut front: BTreeMap<String, Vec<Outcome>> = BTreeMap::new();
    for (path, indices) in by_path {
        let recording = read_recording(path, ReadOptions::channels(geometry.n_mics()))?;
        for i in indices {
            let s = &manifest.samples[i];
            let truth = s.azimuth_x.map(pixel_to_degrees);
            let clip = recording.slice(offset_to_index(s.clip.offset_s, recording.sample_rate()), CLIP_SAMPLES)?;
            let outcome = |pred: f64| Outcome {
                action: s.action,
                condition: s.robot_condition,
                true_deg: truth,
                pred_deg: Some(pred),
                true_near: None,
                pred_near: None,
                true_presence: true,
                pred_presence: None,
            };
            let g = baseline_predict(&engine, &clip, geometry, truth)?;
            gcc.entry(s.room_id.clone()).or_default().push(outcome(g.angle_deg));
            let f = constant_front(geometry, oracle_pair(truth)?);
            front.entry(s.room_id.clone()).or_default().push(outcome(f));
        }
    }
    let per_room = |method: &str, rooms: &BTreeMap<String, Vec<Outcome>>| {
        let tables: Vec<MetricsTable> = rooms.values().map(|o| MetricsTable::from_outcomes(method, o)).collect();
        MetricsTable::mean_over(method, &tables)
    };
    let gcc_table = per_room(GCC_METHOD, &gcc);
    let front_table = per_room(FRONT_METHOD, &front);
    let uniform = MetricsTable::constant_mae(UNIFORM_METHOD, UNIFORM_MAE_DEG, &gcc_table);
    Ok(vec![gcc_table, front_table, uniform])
}
